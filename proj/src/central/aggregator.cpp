#include "shir/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "shir/errors.hpp"
#include "shir/kernels.hpp"

namespace shir {

CoefficientBundle CoefficientBundle::zeros(std::size_t sites, std::size_t p) {
    const auto M = static_cast<Eigen::Index>(sites);
    const auto P = static_cast<Eigen::Index>(p);
    return from_parts(Vector::Zero(P), Matrix::Zero(M, P));
}

CoefficientBundle CoefficientBundle::from_parts(Vector mu, Matrix alpha) {
    if (alpha.cols() != mu.size()) throw ContractViolation("mu and alpha disagree on p");
    CoefficientBundle b;
    b.beta = alpha.rowwise() + mu.transpose();
    for (Eigen::Index j = 1; j < mu.size(); ++j) {
        if (mu[j] != 0.0) b.active_mu.push_back(static_cast<std::size_t>(j));
        if (alpha.col(j).squaredNorm() != 0.0) b.active_alpha.push_back(static_cast<std::size_t>(j));
    }
    b.mu = std::move(mu);
    b.alpha = std::move(alpha);
    return b;
}

namespace {

struct Problem {
    Eigen::Index M = 0;
    Eigen::Index p = 0;
    std::vector<Matrix> A;  // n_m / N * H_m
    Matrix b;               // rows n_m / N * g_m
};

Problem make_problem(std::span<const LocalSummary> summaries, std::span<const std::size_t> order) {
    if (summaries.empty()) throw ContractViolation("no summaries supplied");
    const auto p = static_cast<Eigen::Index>(summaries.front().p());
    std::uint64_t N = 0;
    for (const auto& s : summaries) {
        if (static_cast<Eigen::Index>(s.p()) != p || s.H.rows() != p || s.H.cols() != p)
            throw ContractViolation("site '" + s.site_id + "' has p = " + std::to_string(s.p()) +
                                    ", expected " + std::to_string(p));
        if (s.family != summaries.front().family)
            throw ContractViolation("site '" + s.site_id + "' uses a different loss family");
        N += s.n;
    }
    Problem pr;
    pr.M = static_cast<Eigen::Index>(summaries.size());
    pr.p = p;
    pr.A.reserve(summaries.size());
    pr.b.resize(pr.M, p);
    for (Eigen::Index k = 0; k < pr.M; ++k) {
        const auto& s = summaries[order[static_cast<std::size_t>(k)]];
        const double w = static_cast<double>(s.n) / static_cast<double>(N);
        pr.A.push_back(w * s.H);
        pr.b.row(k) = w * s.g.transpose();
    }
    return pr;
}

std::vector<std::size_t> identity_order(std::size_t n) {
    std::vector<std::size_t> o(n);
    std::iota(o.begin(), o.end(), std::size_t{0});
    return o;
}

// R_m = b_m - A_m beta_m
Matrix residuals(const Problem& pr, const Vector& mu, const Matrix& alpha) {
    Matrix R(pr.M, pr.p);
    for (Eigen::Index m = 0; m < pr.M; ++m) {
        const Vector beta = mu + alpha.row(m).transpose();
        R.row(m) = (pr.b.row(m).transpose() - pr.A[static_cast<std::size_t>(m)] * beta).transpose();
    }
    return R;
}

double penalty_value(const Vector& mu, const Matrix& alpha, const PenaltyConfig& cfg) {
    if (cfg.lambda == 0.0) return 0.0;
    double l1 = 0.0, group = 0.0;
    for (Eigen::Index j = 1; j < mu.size(); ++j) {
        l1 += std::abs(mu[j]);
        group += alpha.col(j).norm();
    }
    return cfg.lambda * (l1 + (cfg.lambda_g == 0.0 ? 0.0 : cfg.lambda_g * group));
}

// Smooth part from residuals: sum_m beta'(A beta - 2 b) = -sum_m beta'(R + b).
double smooth_from_residuals(const Problem& pr, const Vector& mu, const Matrix& alpha,
                             const Matrix& R) {
    double total = 0.0;
    for (Eigen::Index m = 0; m < pr.M; ++m) {
        const Vector beta = mu + alpha.row(m).transpose();
        total -= beta.dot(R.row(m).transpose() + pr.b.row(m).transpose());
    }
    return total;
}

double kkt_from_residuals(const Vector& mu, const Matrix& alpha, const Matrix& R,
                          const PenaltyConfig& cfg) {
    const Eigen::Index M = alpha.rows();
    const Eigen::Index p = mu.size();
    const double group_weight = cfg.lambda * cfg.lambda_g;
    double worst = 0.0;
    Vector grad(M);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double gmu = -2.0 * R.col(j).sum();
        double v;
        if (j == 0)
            v = std::abs(gmu);
        else if (mu[j] != 0.0)
            v = std::abs(gmu + cfg.lambda * (mu[j] > 0 ? 1.0 : -1.0));
        else
            v = std::max(0.0, std::abs(gmu) - cfg.lambda);
        worst = std::max(worst, v);

        if (M < 2) continue;
        grad = -2.0 * R.col(j);
        grad.array() -= grad.mean();  // projection onto the constraint plane
        const double anorm = alpha.col(j).norm();
        if (j == 0 || group_weight == 0.0)
            v = grad.norm();
        else if (anorm != 0.0)
            v = (grad + group_weight * alpha.col(j) / anorm).norm();
        else
            v = std::max(0.0, grad.norm() - group_weight);
        worst = std::max(worst, v);
    }
    return worst;
}

class BlockSolver {
public:
    BlockSolver(const Problem& pr, const PenaltyConfig& cfg, const ShirOptions& opts)
        : pr_(pr), cfg_(cfg), opts_(opts) {}

    // Runs to convergence from (mu, alpha). When `intercepts_only` is set,
    // every j >= 1 stays at zero.
    void run(Vector& mu, Matrix& alpha, bool intercepts_only, ShirDiagnostics* diag) {
        R_ = residuals(pr_, mu, alpha);
        const Eigen::Index jmax = intercepts_only ? 1 : pr_.p;
        double previous = objective(mu, alpha);
        double kkt = std::numeric_limits<double>::infinity();
        int sweeps = 0;
        for (; sweeps < opts_.max_sweeps; ++sweeps) {
            for (Eigen::Index j = 0; j < jmax; ++j) {
                update_mu(mu, alpha, j);
                if (pr_.M > 1) update_alpha(alpha, j, diag);
            }
            const double current = objective(mu, alpha);
            if (diag) diag->objective_trace.push_back(current);
            const bool flat = std::abs(previous - current) < opts_.objective_tol * (1.0 + std::abs(current));
            previous = current;
            if (!flat) continue;
            R_ = residuals(pr_, mu, alpha);
            kkt = intercepts_only ? intercept_kkt() : kkt_from_residuals(mu, alpha, R_, cfg_);
            if (kkt <= opts_.kkt_tol) {
                ++sweeps;
                break;
            }
        }
        if (diag) {
            diag->sweeps = sweeps;
            diag->kkt = kkt;
        }
        if (kkt > opts_.kkt_tol) throw ConvergenceError("aggregator did not converge", kkt);
    }

private:
    double objective(const Vector& mu, const Matrix& alpha) const {
        return smooth_from_residuals(pr_, mu, alpha, R_) + penalty_value(mu, alpha, cfg_);
    }

    double intercept_kkt() const {
        double worst = std::abs(2.0 * R_.col(0).sum());
        if (pr_.M > 1) {
            Vector grad = -2.0 * R_.col(0);
            grad.array() -= grad.mean();
            worst = std::max(worst, grad.norm());
        }
        return worst;
    }

    void shift_residuals(Eigen::Index m, Eigen::Index j, double delta) {
        kernels::axpy(-delta, row(pr_.A[static_cast<std::size_t>(m)], j), row(R_, m));
    }

    void update_mu(Vector& mu, const Matrix& /*alpha*/, Eigen::Index j) {
        double a = 0.0, c = 0.0;
        for (Eigen::Index m = 0; m < pr_.M; ++m) {
            a += pr_.A[static_cast<std::size_t>(m)](j, j);
            c += R_(m, j);
        }
        if (a <= 0.0) return;
        const double z = mu[j] + c / a;
        const double next = j == 0 ? z : soft_threshold(z, cfg_.lambda / (2.0 * a));
        const double delta = next - mu[j];
        if (delta == 0.0) return;
        mu[j] = next;
        for (Eigen::Index m = 0; m < pr_.M; ++m) shift_residuals(m, j, delta);
    }

    static double soft_threshold(double z, double t) {
        if (z > t) return z - t;
        if (z < -t) return z + t;
        return 0.0;
    }

    void update_alpha(Matrix& alpha, Eigen::Index j, ShirDiagnostics* diag) {
        const Eigen::Index M = pr_.M;
        Vector d(M), r(M), start = alpha.col(j), cur = start;
        for (Eigen::Index m = 0; m < M; ++m) {
            d[m] = pr_.A[static_cast<std::size_t>(m)](j, j);
            r[m] = R_(m, j);
        }
        const double weight = cfg_.lambda * cfg_.lambda_g;
        const bool free_block = j == 0 || weight == 0.0;

        if (free_block && (d.array() > 0.0).all()) {
            // Exact minimizer of sum_m (d_m x_m^2 - 2 r_m x_m) subject to sum x = 0.
            const double nu = (r.array() / d.array()).sum() / d.cwiseInverse().sum();
            cur = start.array() + (r.array() - nu) / d.array();
            cur.array() -= cur.mean();
        } else {
            const double c = d.maxCoeff();
            if (c <= 0.0) return;
            const double tau = free_block ? 0.0 : weight / (2.0 * c);
            Vector x(M), next(M);
            for (int it = 0; it < opts_.max_block_iterations; ++it) {
                x = cur + r / c;
                x.array() -= x.mean();
                const double norm = x.norm();
                if (norm <= tau)
                    next.setZero();
                else
                    next = x * (1.0 - tau / norm);
                const Vector step = next - cur;
                r.array() -= d.array() * step.array();
                cur = next;
                if (step.cwiseAbs().maxCoeff() < opts_.block_tol) break;
            }
        }
        bool moved = false;
        for (Eigen::Index m = 0; m < M; ++m) {
            const double delta = cur[m] - start[m];
            if (delta == 0.0) continue;
            moved = true;
            shift_residuals(m, j, delta);
        }
        if (!moved) return;
        alpha.col(j) = cur;
        if (diag)
            diag->max_constraint_violation =
                std::max(diag->max_constraint_violation, std::abs(cur.sum()));
    }

    const Problem& pr_;
    const PenaltyConfig& cfg_;
    const ShirOptions& opts_;
    Matrix R_;
};

void check_cfg(const PenaltyConfig& cfg) {
    if (!(cfg.lambda >= 0.0) || !(cfg.lambda_g >= 0.0))
        throw ContractViolation("penalty parameters must be nonnegative");
}

void require_positive_definite(std::span<const LocalSummary> summaries) {
    for (const auto& s : summaries) {
        Eigen::LLT<Eigen::MatrixXd> llt(s.H);
        if (llt.info() != Eigen::Success)
            throw SingularityError("lambda = 0 but the Hessian of site '" + s.site_id +
                                   "' is singular");
    }
}

}  // namespace

std::vector<std::size_t> canonical_site_order(std::span<const LocalSummary> summaries) {
    auto order = identity_order(summaries.size());
    auto less = [&](std::size_t a, std::size_t b) {
        const auto& x = summaries[a];
        const auto& y = summaries[b];
        if (x.site_id != y.site_id) return x.site_id < y.site_id;
        if (x.n != y.n) return x.n < y.n;
        if (x.g.size() != y.g.size()) return x.g.size() < y.g.size();
        for (Eigen::Index j = 0; j < x.g.size(); ++j)
            if (x.g[j] != y.g[j]) return x.g[j] < y.g[j];
        for (Eigen::Index j = 0; j < x.H.size(); ++j)
            if (x.H.data()[j] != y.H.data()[j]) return x.H.data()[j] < y.H.data()[j];
        return false;
    };
    std::stable_sort(order.begin(), order.end(), less);
    return order;
}

double shir_objective(std::span<const LocalSummary> summaries, const CoefficientBundle& bundle,
                      const PenaltyConfig& cfg) {
    check_cfg(cfg);
    const auto order = identity_order(summaries.size());
    const Problem pr = make_problem(summaries, order);
    if (bundle.p() != static_cast<std::size_t>(pr.p) ||
        bundle.sites() != static_cast<std::size_t>(pr.M))
        throw ContractViolation("bundle shape does not match the summaries");
    double smooth = 0.0;
    for (Eigen::Index m = 0; m < pr.M; ++m) {
        const Vector beta = bundle.beta.row(m).transpose();
        smooth += beta.dot(pr.A[static_cast<std::size_t>(m)] * beta) -
                  2.0 * beta.dot(pr.b.row(m).transpose());
    }
    return smooth + penalty_value(bundle.mu, bundle.alpha, cfg);
}

double kkt_residual(std::span<const LocalSummary> summaries, const CoefficientBundle& bundle,
                    const PenaltyConfig& cfg) {
    check_cfg(cfg);
    const auto order = identity_order(summaries.size());
    const Problem pr = make_problem(summaries, order);
    if (bundle.p() != static_cast<std::size_t>(pr.p) ||
        bundle.sites() != static_cast<std::size_t>(pr.M))
        throw ContractViolation("bundle shape does not match the summaries");
    return kkt_from_residuals(bundle.mu, bundle.alpha, residuals(pr, bundle.mu, bundle.alpha), cfg);
}

namespace {

CoefficientBundle solve_ordered(std::span<const LocalSummary> summaries, const PenaltyConfig& cfg,
                                const ShirOptions& opts, const CoefficientBundle* warm,
                                ShirDiagnostics* diag, bool intercepts_only) {
    check_cfg(cfg);
    const auto order = canonical_site_order(summaries);
    const Problem pr = make_problem(summaries, order);
    if (cfg.lambda == 0.0 && !intercepts_only) require_positive_definite(summaries);

    Vector mu = Vector::Zero(pr.p);
    Matrix alpha = Matrix::Zero(pr.M, pr.p);
    if (warm) {
        if (warm->p() != static_cast<std::size_t>(pr.p) ||
            warm->sites() != static_cast<std::size_t>(pr.M))
            throw ContractViolation("warm start shape does not match the summaries");
        mu = warm->mu;
        for (Eigen::Index k = 0; k < pr.M; ++k)
            alpha.row(k) = warm->alpha.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(k)]));
        if (intercepts_only) {
            mu.tail(pr.p - 1).setZero();
            alpha.rightCols(pr.p - 1).setZero();
        }
    }
    if (pr.M == 1) alpha.setZero();

    BlockSolver solver(pr, cfg, opts);
    solver.run(mu, alpha, intercepts_only, diag);

    Matrix out(pr.M, pr.p);
    for (Eigen::Index k = 0; k < pr.M; ++k)
        out.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(k)])) = alpha.row(k);
    return CoefficientBundle::from_parts(std::move(mu), std::move(out));
}

}  // namespace

CoefficientBundle solve_shir(std::span<const LocalSummary> summaries, const PenaltyConfig& cfg,
                             const ShirOptions& opts, const CoefficientBundle* warm_start,
                             ShirDiagnostics* diag) {
    return solve_ordered(summaries, cfg, opts, warm_start, diag, false);
}

CoefficientBundle intercept_only(std::span<const LocalSummary> summaries) {
    PenaltyConfig cfg{0.0, 0.0, GammaSchedule::bic};
    return solve_ordered(summaries, cfg, ShirOptions{}, nullptr, nullptr, true);
}

double lambda_critical(std::span<const LocalSummary> summaries, double lambda_g) {
    const CoefficientBundle null = intercept_only(summaries);
    const auto order = identity_order(summaries.size());
    const Problem pr = make_problem(summaries, order);
    const Matrix R = residuals(pr, null.mu, null.alpha);
    double top = 0.0;
    Vector grad(pr.M);
    for (Eigen::Index j = 1; j < pr.p; ++j) {
        top = std::max(top, 2.0 * std::abs(R.col(j).sum()));
        if (pr.M > 1 && lambda_g > 0.0) {
            grad = 2.0 * R.col(j);
            grad.array() -= grad.mean();
            top = std::max(top, grad.norm() / lambda_g);
        }
    }
    return top;
}

}  // namespace shir
