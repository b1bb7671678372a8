#include "shir/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "shir/errors.hpp"

namespace shir {

std::string_view to_string(GammaSchedule s) noexcept {
    switch (s) {
        case GammaSchedule::aic: return "aic";
        case GammaSchedule::bic: return "bic";
        case GammaSchedule::mbic: return "mbic";
        case GammaSchedule::ric: return "ric";
    }
    return "bic";
}

std::optional<GammaSchedule> parse_schedule(std::string_view s) noexcept {
    if (s == "aic" || s == "AIC") return GammaSchedule::aic;
    if (s == "bic" || s == "BIC") return GammaSchedule::bic;
    if (s == "mbic" || s == "mBIC" || s == "MBIC") return GammaSchedule::mbic;
    if (s == "ric" || s == "RIC") return GammaSchedule::ric;
    return std::nullopt;
}

double gamma_n(GammaSchedule s, std::uint64_t N, std::size_t p) {
    if (N == 0) throw ContractViolation("gamma_N needs N > 0");
    const double n = static_cast<double>(N);
    const double dp = static_cast<double>(p);
    switch (s) {
        case GammaSchedule::aic: return 2.0 / n;
        case GammaSchedule::bic: return std::log(n) / n;
        case GammaSchedule::mbic: return std::log(std::log(dp)) * std::log(n) / n;
        case GammaSchedule::ric: return 2.0 * std::log(dp) / n;
    }
    return std::log(n) / n;
}

namespace {

double total_n(std::span<const LocalSummary> summaries) {
    std::uint64_t N = 0;
    for (const auto& s : summaries) N += s.n;
    return static_cast<double>(N);
}

}  // namespace

double deviance(std::span<const LocalSummary> summaries, const CoefficientBundle& bundle) {
    if (bundle.sites() != summaries.size()) throw ContractViolation("bundle has the wrong site count");
    const double N = total_n(summaries);
    double total = 0.0;
    for (std::size_t m = 0; m < summaries.size(); ++m) {
        const auto& s = summaries[m];
        if (s.p() != bundle.p()) throw ContractViolation("site '" + s.site_id + "' has the wrong p");
        const Vector b = bundle.beta.row(static_cast<Eigen::Index>(m)).transpose();
        total += static_cast<double>(s.n) / N * (b.dot(s.H * b) - 2.0 * s.g.dot(b));
    }
    return total;
}

double degrees_of_freedom(std::span<const LocalSummary> summaries,
                          const CoefficientBundle& bundle, const PenaltyConfig& cfg) {
    const std::size_t M = summaries.size();
    if (bundle.sites() != M) throw ContractViolation("bundle has the wrong site count");
    const auto p = static_cast<Eigen::Index>(bundle.p());
    const double N = total_n(summaries);
    const auto order = canonical_site_order(summaries);

    std::vector<Eigen::Index> mu_idx{0}, alpha_idx{0};
    for (auto j : bundle.active_mu) mu_idx.push_back(static_cast<Eigen::Index>(j));
    for (auto j : bundle.active_alpha) alpha_idx.push_back(static_cast<Eigen::Index>(j));
    const auto kmu = static_cast<Eigen::Index>(mu_idx.size());
    const auto ka = static_cast<Eigen::Index>(alpha_idx.size());
    const Eigen::Index free_sites = M > 1 ? static_cast<Eigen::Index>(M - 1) : 0;
    const Eigen::Index K = kmu + free_sites * ka;

    // Column of the parameter vector holding alpha for site position k >= 1
    // (canonical order) at alpha_idx[a].
    auto alpha_col = [&](Eigen::Index k, Eigen::Index a) { return kmu + (k - 1) * ka + a; };

    Matrix L = Matrix::Zero(K, K);
    Matrix J(p, K);
    for (std::size_t k = 0; k < M; ++k) {
        const auto& s = summaries[order[k]];
        J.setZero();
        for (Eigen::Index a = 0; a < kmu; ++a) J(mu_idx[a], a) = 1.0;
        if (M > 1) {
            for (Eigen::Index a = 0; a < ka; ++a) {
                if (k == 0)
                    for (Eigen::Index q = 1; q <= free_sites; ++q) J(alpha_idx[a], alpha_col(q, a)) = -1.0;
                else
                    J(alpha_idx[a], alpha_col(static_cast<Eigen::Index>(k), a)) = 1.0;
            }
        }
        L.noalias() += (2.0 * static_cast<double>(s.n) / N) * (J.transpose() * s.H * J);
    }

    Matrix Q = L;
    const double weight = cfg.lambda * cfg.lambda_g;
    if (M > 1 && weight > 0.0) {
        const auto Mi = static_cast<Eigen::Index>(M);
        Matrix T = Matrix::Zero(Mi, free_sites);
        T.row(0).setConstant(-1.0);
        T.bottomRows(free_sites).setIdentity();
        for (Eigen::Index a = 1; a < ka; ++a) {
            Vector v(Mi);
            for (Eigen::Index k = 0; k < Mi; ++k)
                v[k] = bundle.alpha(static_cast<Eigen::Index>(order[static_cast<std::size_t>(k)]), alpha_idx[a]);
            const double nrm = v.norm();
            const Matrix curv = weight * (Matrix::Identity(Mi, Mi) / nrm -
                                          v * v.transpose() / (nrm * nrm * nrm));
            const Matrix block = T.transpose() * curv * T;
            for (Eigen::Index q = 1; q <= free_sites; ++q)
                for (Eigen::Index r = 1; r <= free_sites; ++r)
                    Q(alpha_col(q, a), alpha_col(r, a)) += block(q - 1, r - 1);
        }
    }

    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success)
        throw SingularityError("restricted Hessian is singular (" + std::to_string(kmu - 1) +
                               " active shared effects, " + std::to_string(ka - 1) +
                               " active deviation groups)");
    const Eigen::MatrixXd X = llt.solve(Eigen::MatrixXd(L));
    return X.trace();
}

std::vector<double> default_lambda_g_grid(std::size_t sites) {
    const double base = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(sites, 1)));
    return {0.25 * base, 0.5 * base, base, 2.0 * base, 4.0 * base};
}

std::vector<double> default_lambda_grid(std::span<const LocalSummary> summaries,
                                        std::span<const double> lambda_g_grid, std::size_t count,
                                        double ratio) {
    if (lambda_g_grid.empty()) throw ContractViolation("lambda_g grid is empty");
    const double smallest = *std::min_element(lambda_g_grid.begin(), lambda_g_grid.end());
    const double top = lambda_critical(summaries, smallest);
    std::vector<double> grid(count);
    if (count == 0) return grid;
    if (count == 1 || !(top > 0.0)) return std::vector<double>(1, top);
    const double step = std::log(ratio) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k) grid[k] = top * std::exp(step * static_cast<double>(k));
    return grid;
}

namespace {

struct PathResult {
    std::vector<GicPoint> points;
    std::vector<CoefficientBundle> bundles;
};

PathResult run_path(std::span<const LocalSummary> summaries, const std::vector<double>& lambdas,
                    double lambda_g, GammaSchedule schedule, double gamma,
                    const ShirOptions& solver) {
    PathResult out;
    std::optional<CoefficientBundle> warm;
    for (double lambda : lambdas) {
        GicPoint pt;
        pt.lambda = lambda;
        pt.lambda_g = lambda_g;
        const PenaltyConfig cfg{lambda, lambda_g, schedule};
        CoefficientBundle b;
        try {
            ShirDiagnostics diag;
            b = solve_shir(summaries, cfg, solver, warm ? &*warm : nullptr, &diag);
            warm = b;
            pt.kkt = kkt_residual(summaries, b, cfg);
            pt.deviance = deviance(summaries, b);
            pt.df = degrees_of_freedom(summaries, b, cfg);
            pt.gic = pt.deviance + gamma * pt.df;
            pt.ok = true;
        } catch (const ConvergenceError& e) {
            pt.kkt = e.kkt_residual();
        } catch (const SingularityError&) {
        }
        out.points.push_back(pt);
        out.bundles.push_back(pt.ok ? std::move(b) : CoefficientBundle{});
    }
    return out;
}

}  // namespace

GicResult select_by_gic(std::span<const LocalSummary> summaries,
                        std::span<const double> lambda_grid,
                        std::span<const double> lambda_g_grid, GammaSchedule schedule,
                        const GicOptions& opts) {
    if (summaries.empty()) throw ContractViolation("no summaries supplied");
    if (lambda_grid.empty() || lambda_g_grid.empty()) throw ContractViolation("empty tuning grid");
    std::uint64_t N = 0;
    for (const auto& s : summaries) N += s.n;
    const double gamma = gamma_n(schedule, N, summaries.front().p());

    std::vector<double> lambdas(lambda_grid.begin(), lambda_grid.end());
    std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
    std::vector<double> gs(lambda_g_grid.begin(), lambda_g_grid.end());
    std::sort(gs.begin(), gs.end());

    std::vector<PathResult> paths(gs.size());
    const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(gs.size())));
    if (threads == 1) {
        for (std::size_t i = 0; i < gs.size(); ++i)
            paths[i] = run_path(summaries, lambdas, gs[i], schedule, gamma, opts.solver);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < gs.size(); i += threads)
                    paths[i] = run_path(summaries, lambdas, gs[i], schedule, gamma, opts.solver);
            });
        for (auto& th : pool) th.join();
    }

    GicResult res;
    bool found = false;
    double worst_kkt = 0.0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        for (std::size_t k = 0; k < lambdas.size(); ++k) {
            const GicPoint& pt = paths[i].points[k];
            res.table.push_back(pt);
            if (!pt.ok) {
                ++res.failures;
                continue;
            }
            worst_kkt = std::max(worst_kkt, pt.kkt);
            const bool tied = found && std::abs(pt.gic - res.gic) <= 1e-12 * std::max(1.0, std::abs(res.gic));
            bool better = !found || (!tied && pt.gic < res.gic);
            if (tied)
                better = pt.lambda > res.lambda || (pt.lambda == res.lambda && pt.lambda_g > res.lambda_g);
            if (!better) continue;
            found = true;
            res.lambda = pt.lambda;
            res.lambda_g = pt.lambda_g;
            res.deviance = pt.deviance;
            res.df = pt.df;
            res.gic = pt.gic;
            res.bundle = paths[i].bundles[k];
        }
    }
    res.max_kkt = worst_kkt;
    if (!found)
        throw ConvergenceError("no tuning grid point converged",
                               res.table.empty() ? 0.0 : res.table.back().kkt);
    return res;
}

}  // namespace shir
