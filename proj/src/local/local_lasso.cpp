#include "shir/local_lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "shir/errors.hpp"
#include "shir/family.hpp"
#include "shir/quadratic_lasso.hpp"

namespace shir {

Vector penalty_weights(const StudyData& data, bool standardize) {
    const auto p = static_cast<Eigen::Index>(data.p());
    Vector w = Vector::Ones(p);
    w[0] = 0.0;
    if (!standardize) return w;
    const double n = static_cast<double>(data.n());
    for (Eigen::Index j = 1; j < p; ++j) {
        const auto col = data.X().col(j);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / n;
        if (var > 0.0) w[j] = std::sqrt(var);
    }
    return w;
}

double lasso_objective(const StudyData& data, LossFamily family, double lambda,
                       const Vector& weights, const Vector& beta) {
    return empirical_loss(data, beta, family) + lambda * weights.dot(beta.cwiseAbs());
}

double lasso_kkt(const StudyData& data, LossFamily family, double lambda, const Vector& weights,
                 const Vector& beta) {
    return lasso_kkt_residual(gradient(data, beta, family), beta, lambda * weights);
}

Vector null_fit(const StudyData& data, LossFamily family) {
    Vector beta = Vector::Zero(static_cast<Eigen::Index>(data.p()));
    const double ybar = data.y().mean();
    if (family == LossFamily::squared_error) {
        beta[0] = ybar;
    } else {
        if (ybar <= 0.0 || ybar >= 1.0)
            throw DataError("site '" + data.site_id() + "': response has a single class");
        beta[0] = std::log(ybar / (1.0 - ybar));
    }
    return beta;
}

double lambda_max(const StudyData& data, LossFamily family, const Vector& weights) {
    const Vector grad = gradient(data, null_fit(data, family), family);
    double top = 0.0;
    for (Eigen::Index j = 1; j < grad.size(); ++j)
        if (weights[j] > 0.0) top = std::max(top, std::abs(grad[j]) / weights[j]);
    return top;
}

std::vector<double> log_grid(double top, std::size_t count, double ratio) {
    if (count == 0) return {};
    if (count == 1) return {top};
    std::vector<double> grid(count);
    const double step = std::log(ratio) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k)
        grid[k] = top * std::exp(step * static_cast<double>(k));
    grid.back() = top * ratio;
    return grid;
}

Vector fit_local_lasso(const StudyData& data, LossFamily family, double lambda,
                       const LassoOptions& opts, const Vector* warm_start, LassoDiagnostics* diag) {
    if (!(lambda >= 0.0)) throw ContractViolation("lambda must be nonnegative");
    const auto p = static_cast<Eigen::Index>(data.p());
    if (warm_start && warm_start->size() != p)
        throw ContractViolation("warm start has the wrong length");

    const Vector weights = penalty_weights(data, opts.standardize);
    const Vector penalty = lambda * weights;
    Vector beta = warm_start ? *warm_start : null_fit(data, family);

    CdOptions cd{opts.tol, opts.max_sweeps};
    auto objective = [&](const Vector& b) {
        return empirical_loss(data, b, family) + penalty.dot(b.cwiseAbs());
    };

    if (family == LossFamily::squared_error) {
        const Matrix A = hessian(data, beta, family);
        const Vector c = A * beta - gradient(data, beta, family);
        std::vector<double>* trace = nullptr;
        if (diag) {
            diag->outer_objectives.push_back(objective(beta));
            trace = &diag->sweep_objectives.emplace_back();
        }
        CdResult r = solve_quadratic_lasso(A, c, penalty, beta, cd, trace);
        double kkt = lasso_kkt_residual(A * beta - c, beta, penalty);
        // Residual bookkeeping in CD drifts slightly; a second pass from the
        // current point recomputes it fresh.
        if (kkt > opts.kkt_tol && r.converged) {
            cd.tol *= 1e-2;
            r = solve_quadratic_lasso(A, c, penalty, beta, cd, trace);
            kkt = lasso_kkt_residual(A * beta - c, beta, penalty);
        }
        if (diag) {
            diag->outer_iterations = 1;
            diag->sweeps = r.sweeps;
            diag->kkt = kkt;
            diag->outer_objectives.push_back(objective(beta));
        }
        if (kkt > opts.kkt_tol)
            throw ConvergenceError("local lasso did not converge", kkt);
        return beta;
    }

    double current = objective(beta);
    if (diag) diag->outer_objectives.push_back(current);
    double kkt = std::numeric_limits<double>::infinity();
    int total_sweeps = 0;
    for (int outer = 0; outer < opts.max_outer; ++outer) {
        const Matrix H = hessian(data, beta, family);
        const Vector c = H * beta - gradient(data, beta, family);
        Vector next = beta;
        std::vector<double>* trace = diag ? &diag->sweep_objectives.emplace_back() : nullptr;
        const CdResult r = solve_quadratic_lasso(H, c, penalty, next, cd, trace);
        total_sweeps += r.sweeps;

        // Damped step: halve until the true objective does not increase.
        Vector step = next - beta;
        double value = objective(next);
        for (int halvings = 0; value > current && halvings < 40; ++halvings) {
            step *= 0.5;
            next = beta + step;
            value = objective(next);
        }
        const double change = step.cwiseAbs().maxCoeff();
        if (value <= current) {
            beta = next;
            current = value;
        }
        if (diag) {
            diag->outer_iterations = outer + 1;
            diag->outer_objectives.push_back(current);
        }
        if (change < opts.tol) {
            kkt = lasso_kkt(data, family, lambda, weights, beta);
            if (kkt <= opts.kkt_tol) break;
            cd.tol = std::max(cd.tol * 1e-2, 1e-15);
        }
    }
    kkt = lasso_kkt(data, family, lambda, weights, beta);
    if (diag) {
        diag->sweeps = total_sweeps;
        diag->kkt = kkt;
    }
    if (kkt > opts.kkt_tol) throw ConvergenceError("local logistic lasso did not converge", kkt);
    return beta;
}

namespace {

// held-out folds can be a single row, below what StudyData accepts
double heldout_loss(const StudyData& data, std::span<const std::size_t> rows, const Vector& beta, LossFamily family) {
    double s = 0.0;
    for (auto i : rows) {
        const auto r = static_cast<Eigen::Index>(i);
        s += loss_value(family, data.X().row(r).dot(beta), data.y()[r]);
    }
    return s / static_cast<double>(rows.size());
}

std::vector<std::size_t> fold_labels(std::size_t n, int folds, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> label(n);
    for (std::size_t i = 0; i < n; ++i) label[perm[i]] = i % static_cast<std::size_t>(folds);
    return label;
}

bool training_sets_ok(const StudyData& data, const std::vector<std::size_t>& label, int folds) {
    for (int k = 0; k < folds; ++k) {
        double ones = 0.0, count = 0.0;
        for (std::size_t i = 0; i < label.size(); ++i) {
            if (label[i] == static_cast<std::size_t>(k)) continue;
            ones += data.y()[static_cast<Eigen::Index>(i)];
            count += 1.0;
        }
        if (ones == 0.0 || ones == count) return false;
    }
    return true;
}

}  // namespace

LocalFit cross_validate_lambda(const StudyData& data, LossFamily family, int folds,
                               std::span<const double> grid, std::uint64_t seed,
                               const LassoOptions& opts) {
    if (folds < 2) throw ContractViolation("need at least 2 folds");
    if (static_cast<std::size_t>(folds) > data.n())
        throw ContractViolation("more folds than observations");
    if (grid.empty()) throw ContractViolation("lambda grid is empty");
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] < grid[k - 1]))
            throw ContractViolation("lambda grid must be strictly decreasing");
    validate_response(data, family);

    auto label = fold_labels(data.n(), folds, seed);
    if (family == LossFamily::logistic && !training_sets_ok(data, label, folds)) {
        label = fold_labels(data.n(), folds, seed ^ 0x9e3779b97f4a7c15ULL);
        if (!training_sets_ok(data, label, folds))
            throw DataError("site '" + data.site_id() +
                            "': a cross-validation training set has a single response class");
    }

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> total(grid.size(), 0.0);
    for (int k = 0; k < folds; ++k) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < label.size(); ++i)
            (label[i] == static_cast<std::size_t>(k) ? test : train).push_back(i);
        const StudyData tr = data.subset(train);
        Vector beta = null_fit(tr, family);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            try {
                beta = fit_local_lasso(tr, family, grid[g], opts, &beta);
                total[g] += heldout_loss(data, test, beta, family);
            } catch (const ConvergenceError&) {
                total[g] = inf;
            } catch (const OverflowError&) {
                total[g] = inf;
            }
        }
    }

    LocalFit fit;
    fit.cv_curve.reserve(grid.size());
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double mean = total[g] / folds;
        fit.cv_curve.push_back({grid[g], mean});
        if (mean < fit.cv_curve[best].mean_loss) best = g;
    }
    fit.lambda_m = grid[best];

    Vector beta = null_fit(data, family);
    for (std::size_t g = 0; g <= best; ++g) beta = fit_local_lasso(data, family, grid[g], opts, &beta);
    fit.beta = std::move(beta);
    return fit;
}

LocalFit fit_site(const StudyData& data, LossFamily family, int folds, std::uint64_t seed,
                  const LassoOptions& opts) {
    validate_response(data, family);
    const Vector w = penalty_weights(data, opts.standardize);
    const double top = lambda_max(data, family, w);
    if (!(top > 0.0)) {
        // Gradient already vanishes at the null model; nothing to tune.
        const double only[] = {0.0};
        return cross_validate_lambda(data, family, folds, only, seed, opts);
    }
    const auto grid = log_grid(top, 100, 1e-3);
    return cross_validate_lambda(data, family, folds, grid, seed, opts);
}

LocalSummary summarize(const StudyData& data, const LocalFit& fit, LossFamily family) {
    LocalSummary s;
    s.site_id = data.site_id();
    s.n = data.n();
    s.family = family;
    s.lambda_m = fit.lambda_m;
    s.H = hessian(data, fit.beta, family);
    s.g = s.H * fit.beta - gradient(data, fit.beta, family);
    return s;
}

}  // namespace shir
