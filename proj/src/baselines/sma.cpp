#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "shir/baselines.hpp"
#include "shir/errors.hpp"

namespace shir {

std::size_t sma_screen_dim(std::size_t n) {
    if (n < 3) return 1;
    const double d = static_cast<double>(n);
    return static_cast<std::size_t>(std::floor(d / (3.0 * std::log(d))));
}

std::vector<std::size_t> marginal_screen(std::span<const StudyData> sites, std::size_t keep) {
    if (sites.empty()) throw ContractViolation("no sites supplied");
    const auto p = static_cast<Eigen::Index>(sites.front().p());
    double n = 0.0, sy = 0.0, syy = 0.0;
    Vector sx = Vector::Zero(p), sxx = Vector::Zero(p), sxy = Vector::Zero(p);
    for (const auto& s : sites) {
        n += static_cast<double>(s.n());
        sy += s.y().sum();
        syy += s.y().squaredNorm();
        sx += s.X().colwise().sum().transpose();
        sxx += s.X().cwiseAbs2().colwise().sum().transpose();
        sxy += s.X().transpose() * s.y();
    }
    const double vy = syy - sy * sy / n;
    std::vector<std::pair<double, std::size_t>> score;
    for (Eigen::Index j = 1; j < p; ++j) {
        const double vx = sxx[j] - sx[j] * sx[j] / n;
        const double cov = sxy[j] - sx[j] * sy / n;
        const double r = (vx > 0.0 && vy > 0.0) ? std::abs(cov) / std::sqrt(vx * vy) : 0.0;
        score.emplace_back(r, static_cast<std::size_t>(j));
    }
    keep = std::min(keep, score.size());
    std::stable_sort(score.begin(), score.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < keep; ++k) out.push_back(score[k].second);
    std::sort(out.begin(), out.end());
    return out;
}

Vector fit_mle(const StudyData& data, LossFamily family) {
    validate_response(data, family);
    const auto tag = "site '" + data.site_id() + "'";
    if (data.n() <= data.p())
        throw DataError(tag + ": maximum likelihood needs n > p (n = " + std::to_string(data.n()) +
                        ", p = " + std::to_string(data.p()) + ")");
    const auto separated = [&](const Vector& b) {
        // fitted probabilities pinned at 0 or 1
        return family == LossFamily::logistic && (data.X() * b).cwiseAbs().maxCoeff() > 30.0;
    };
    const auto diverged = [&] { return DataError(tag + ": unpenalized fit diverged (possible separation)"); };
    Vector beta = null_fit(data, family);
    double F = empirical_loss(data, beta, family);
    for (int it = 0; it < 200; ++it) {
        if (separated(beta)) throw diverged();
        const Vector grad = gradient(data, beta, family);
        if (grad.cwiseAbs().maxCoeff() < 1e-10) return beta;
        const Matrix H = hessian(data, beta, family);
        Eigen::LLT<Eigen::MatrixXd> llt(H);
        if (llt.info() != Eigen::Success) throw DataError(tag + ": singular Hessian in the unpenalized fit");
        Vector step = -llt.solve(grad);
        double t = 1.0;
        Vector next = beta + step;
        double Fn = empirical_loss(data, next, family);
        for (int h = 0; Fn > F && h < 50; ++h) {
            t *= 0.5;
            next = beta + t * step;
            Fn = empirical_loss(data, next, family);
        }
        if (Fn > F) break;
        beta = next;
        F = Fn;
        if (!beta.allFinite() || beta.cwiseAbs().maxCoeff() > 1e4) break;
        if (t * step.cwiseAbs().maxCoeff() < 1e-13 && !separated(beta)) return beta;
    }
    if (gradient(data, beta, family).cwiseAbs().maxCoeff() < 1e-8 && beta.cwiseAbs().maxCoeff() <= 1e4 &&
        !separated(beta))
        return beta;
    throw diverged();
}

namespace {

struct SmaProblem {
    std::vector<std::size_t> cols;  // 0 followed by screened covariates
    std::vector<Matrix> A;          // 2 w_m H_m
    std::vector<Vector> c;          // A_m beta_mle_m
    std::vector<Vector> mle;
    std::vector<Matrix> WH;         // w_m H_m
    std::size_t p = 0;
};

SmaProblem build(std::span<const StudyData> sites, LossFamily family, std::size_t screen_dim) {
    if (sites.empty()) throw ContractViolation("no sites supplied");
    SmaProblem pr;
    pr.p = sites.front().p();
    pr.cols.push_back(0);
    if (screen_dim + 1 >= pr.p) {
        for (std::size_t j = 1; j < pr.p; ++j) pr.cols.push_back(j);
    } else {
        const auto kept = marginal_screen(sites, screen_dim);
        pr.cols.insert(pr.cols.end(), kept.begin(), kept.end());
    }
    double N = 0.0;
    for (const auto& s : sites) N += static_cast<double>(s.n());
    const auto q = static_cast<Eigen::Index>(pr.cols.size());
    for (const auto& s : sites) {
        Matrix X(s.X().rows(), q);
        for (Eigen::Index k = 0; k < q; ++k) X.col(k) = s.X().col(static_cast<Eigen::Index>(pr.cols[static_cast<std::size_t>(k)]));
        const StudyData sub(std::move(X), s.y(), s.site_id());
        Vector b = fit_mle(sub, family);
        const double w = static_cast<double>(s.n()) / N;
        Matrix WH = w * hessian(sub, b, family);
        pr.A.push_back(2.0 * WH);
        pr.c.push_back(pr.A.back() * b);
        pr.WH.push_back(std::move(WH));
        pr.mle.push_back(std::move(b));
    }
    return pr;
}

// Per-coordinate LLA weights 0.5 (||beta_j||_1 + eps)^(-1/2); intercept 0.
Vector lla_weights(const std::vector<Vector>& betas, double eps) {
    const auto q = betas.front().size();
    Vector v(q);
    v[0] = 0.0;
    for (Eigen::Index k = 1; k < q; ++k) {
        double l1 = 0.0;
        for (const auto& b : betas) l1 += std::abs(b[k]);
        v[k] = 0.5 / std::sqrt(l1 + eps);
    }
    return v;
}

std::vector<Vector> solve_lla(const SmaProblem& pr, double lambda, const SmaOptions& opts) {
    std::vector<Vector> betas = pr.mle;
    if (lambda == 0.0) return betas;
    for (int round = 0; round < opts.lla_rounds; ++round) {
        const Vector penalty = lambda * lla_weights(betas, opts.epsilon);
        for (std::size_t m = 0; m < betas.size(); ++m) {
            const CdResult r = solve_quadratic_lasso(pr.A[m], pr.c[m], penalty, betas[m], opts.cd);
            if (!r.converged) throw ConvergenceError("sparse meta-analysis step did not converge", r.max_change);
        }
    }
    return betas;
}

double sma_quadratic(const SmaProblem& pr, const std::vector<Vector>& betas) {
    double total = 0.0;
    for (std::size_t m = 0; m < betas.size(); ++m) {
        const Vector d = betas[m] - pr.mle[m];
        total += d.dot(pr.WH[m] * d);
    }
    return total;
}

SmaResult assemble(const SmaProblem& pr, const std::vector<Vector>& betas, double lambda) {
    const auto M = static_cast<Eigen::Index>(betas.size());
    const auto p = static_cast<Eigen::Index>(pr.p);
    Matrix B = Matrix::Zero(M, p);
    for (Eigen::Index m = 0; m < M; ++m)
        for (std::size_t k = 0; k < pr.cols.size(); ++k)
            B(m, static_cast<Eigen::Index>(pr.cols[k])) = betas[static_cast<std::size_t>(m)][static_cast<Eigen::Index>(k)];
    Vector mu = B.colwise().mean().transpose();
    Matrix alpha = B.rowwise() - mu.transpose();
    SmaResult res;
    res.bundle = CoefficientBundle::from_parts(std::move(mu), std::move(alpha));
    res.lambda = lambda;
    res.screened.assign(pr.cols.begin() + 1, pr.cols.end());
    return res;
}

}  // namespace

SmaResult fit_sma(std::span<const StudyData> sites, LossFamily family, std::size_t screen_dim,
                  double lambda, const SmaOptions& opts) {
    if (!(lambda >= 0.0)) throw ContractViolation("lambda must be nonnegative");
    const SmaProblem pr = build(sites, family, screen_dim);
    return assemble(pr, solve_lla(pr, lambda, opts), lambda);
}

SmaResult tune_sma(std::span<const StudyData> sites, LossFamily family, std::size_t screen_dim,
                   GammaSchedule schedule, const SmaOptions& opts) {
    const SmaProblem pr = build(sites, family, screen_dim);
    std::uint64_t N = 0;
    for (const auto& s : sites) N += s.n();
    const double gamma = gamma_n(schedule, N, pr.p);

    // Smallest lambda zeroing every penalized coordinate in the first round.
    const Vector v = lla_weights(pr.mle, opts.epsilon);
    double top = 0.0;
    for (std::size_t m = 0; m < pr.mle.size(); ++m) {
        const Matrix& A = pr.A[m];
        const Vector& c = pr.c[m];
        const double b0 = c[0] / A(0, 0);
        for (Eigen::Index k = 1; k < c.size(); ++k)
            top = std::max(top, std::abs(A(k, 0) * b0 - c[k]) / v[k]);
    }
    std::vector<double> grid = top > 0.0 ? log_grid(top, opts.grid_points, opts.grid_ratio)
                                         : std::vector<double>{0.0};
    grid.push_back(0.0);

    SmaResult best;
    double best_gic = 0.0;
    bool found = false;
    for (double lambda : grid) {
        std::vector<Vector> betas;
        try {
            betas = solve_lla(pr, lambda, opts);
        } catch (const ConvergenceError&) {
            continue;
        }
        double nnz = 0.0;
        for (const auto& b : betas)
            for (Eigen::Index k = 1; k < b.size(); ++k) nnz += b[k] != 0.0 ? 1.0 : 0.0;
        const double gic = sma_quadratic(pr, betas) + gamma * (nnz + static_cast<double>(betas.size()));
        if (found && !(gic < best_gic)) continue;
        found = true;
        best_gic = gic;
        best = assemble(pr, betas, lambda);
    }
    if (!found) throw ConvergenceError("sparse meta-analysis failed on every grid point", 0.0);
    return best;
}

}  // namespace shir
