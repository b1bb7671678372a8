#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "shir/baselines.hpp"
#include "shir/errors.hpp"

namespace shir {

namespace {

double total_n(std::span<const StudyData> sites) {
    double N = 0.0;
    for (const auto& s : sites) N += static_cast<double>(s.n());
    return N;
}

void check_sites(std::span<const StudyData> sites, LossFamily family) {
    if (sites.empty()) throw ContractViolation("no sites supplied");
    for (const auto& s : sites) {
        if (s.p() != sites.front().p())
            throw ContractViolation("site '" + s.site_id() + "' has a different number of columns");
        validate_response(s, family);
    }
}

CoefficientBundle null_bundle(std::span<const StudyData> sites, LossFamily family) {
    const auto M = static_cast<Eigen::Index>(sites.size());
    const auto p = static_cast<Eigen::Index>(sites.front().p());
    Vector intercepts(M);
    for (Eigen::Index m = 0; m < M; ++m) intercepts[m] = null_fit(sites[static_cast<std::size_t>(m)], family)[0];
    Vector mu = Vector::Zero(p);
    Matrix alpha = Matrix::Zero(M, p);
    mu[0] = intercepts.mean();
    alpha.col(0) = intercepts.array() - mu[0];
    alpha.col(0).array() -= alpha.col(0).mean();
    return CoefficientBundle::from_parts(std::move(mu), std::move(alpha));
}

CoefficientBundle blend(const CoefficientBundle& a, const CoefficientBundle& b, double t) {
    if (t == 1.0) return b;
    return CoefficientBundle::from_parts(a.mu + t * (b.mu - a.mu), a.alpha + t * (b.alpha - a.alpha));
}

double smooth_part(std::span<const StudyData> sites, LossFamily family, const CoefficientBundle& b) {
    const double N = total_n(sites);
    double total = 0.0;
    for (std::size_t m = 0; m < sites.size(); ++m) {
        const Vector beta = b.beta.row(static_cast<Eigen::Index>(m)).transpose();
        total += 2.0 * static_cast<double>(sites[m].n()) / N * empirical_loss(sites[m], beta, family);
    }
    return total;
}

double penalty_part(const CoefficientBundle& b, const PenaltyConfig& cfg) {
    if (cfg.lambda == 0.0) return 0.0;
    double l1 = 0.0, group = 0.0;
    for (Eigen::Index j = 1; j < b.mu.size(); ++j) {
        l1 += std::abs(b.mu[j]);
        group += b.alpha.col(j).norm();
    }
    return cfg.lambda * (l1 + cfg.lambda_g * group);
}

}  // namespace

std::vector<LocalSummary> expand_at(std::span<const StudyData> sites, LossFamily family,
                                    const CoefficientBundle& bundle) {
    std::vector<LocalSummary> out;
    out.reserve(sites.size());
    for (std::size_t m = 0; m < sites.size(); ++m) {
        const Vector beta = bundle.beta.row(static_cast<Eigen::Index>(m)).transpose();
        LocalSummary s;
        s.site_id = sites[m].site_id();
        s.n = sites[m].n();
        s.family = family;
        s.H = hessian(sites[m], beta, family);
        s.g = s.H * beta - gradient(sites[m], beta, family);
        out.push_back(std::move(s));
    }
    return out;
}

double ipd_objective(std::span<const StudyData> sites, LossFamily family,
                     const CoefficientBundle& bundle, const PenaltyConfig& cfg) {
    return smooth_part(sites, family, bundle) + penalty_part(bundle, cfg);
}

CoefficientBundle fit_ipd(std::span<const StudyData> sites, LossFamily family,
                          const PenaltyConfig& cfg, const IpdOptions& opts,
                          const CoefficientBundle* warm_start) {
    check_sites(sites, family);
    CoefficientBundle current = warm_start ? *warm_start : null_bundle(sites, family);
    if (current.sites() != sites.size() || current.p() != sites.front().p())
        throw ContractViolation("warm start shape does not match the sites");

    double F = ipd_objective(sites, family, current, cfg);
    auto sums = expand_at(sites, family, current);
    double kkt = kkt_residual(sums, current, cfg);
    int stalls = 0;
    for (int it = 0; it < opts.max_newton && kkt > opts.kkt_tol; ++it) {
        const CoefficientBundle target = solve_shir(sums, cfg, opts.solver, &current);
        double t = 1.0;
        CoefficientBundle next = target;
        double Fn = ipd_objective(sites, family, next, cfg);
        const double slack = 1e-15 * (1.0 + std::abs(F));
        for (int h = 0; Fn > F + slack && h < 50; ++h) {
            t *= 0.5;
            next = blend(current, target, t);
            Fn = ipd_objective(sites, family, next, cfg);
        }
        if (Fn > F + slack) break;
        stalls = (F - Fn <= opts.tol * (1.0 + std::abs(F))) ? stalls + 1 : 0;
        current = std::move(next);
        F = Fn;
        sums = expand_at(sites, family, current);
        kkt = kkt_residual(sums, current, cfg);
        if (stalls >= 3) break;
    }
    if (kkt > opts.kkt_tol) throw ConvergenceError("pooled fit did not converge", kkt);
    return current;
}

std::vector<double> default_ipd_lambda_grid(std::span<const StudyData> sites, LossFamily family,
                                            std::span<const double> lambda_g_grid,
                                            std::size_t count, double ratio) {
    check_sites(sites, family);
    const auto sums = expand_at(sites, family, null_bundle(sites, family));
    return default_lambda_grid(sums, lambda_g_grid, count, ratio);
}

GicResult fit_ipd_gic(std::span<const StudyData> sites, LossFamily family,
                      std::span<const double> lambda_grid, std::span<const double> lambda_g_grid,
                      GammaSchedule schedule, const IpdOptions& opts) {
    check_sites(sites, family);
    if (lambda_grid.empty() || lambda_g_grid.empty()) throw ContractViolation("empty tuning grid");
    std::uint64_t N = 0;
    for (const auto& s : sites) N += s.n();
    const double gamma = gamma_n(schedule, N, sites.front().p());

    std::vector<double> lambdas(lambda_grid.begin(), lambda_grid.end());
    std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
    std::vector<double> gs(lambda_g_grid.begin(), lambda_g_grid.end());
    std::sort(gs.begin(), gs.end());

    GicResult res;
    bool found = false;
    for (double lg : gs) {
        std::optional<CoefficientBundle> warm;
        for (double lambda : lambdas) {
            GicPoint pt;
            pt.lambda = lambda;
            pt.lambda_g = lg;
            const PenaltyConfig cfg{lambda, lg, schedule};
            CoefficientBundle b;
            try {
                b = fit_ipd(sites, family, cfg, opts, warm ? &*warm : nullptr);
                warm = b;
                const auto sums = expand_at(sites, family, b);
                pt.kkt = kkt_residual(sums, b, cfg);
                pt.deviance = smooth_part(sites, family, b);
                pt.df = degrees_of_freedom(sums, b, cfg);
                pt.gic = pt.deviance + gamma * pt.df;
                pt.ok = true;
            } catch (const ConvergenceError& e) {
                pt.kkt = e.kkt_residual();
            } catch (const SingularityError&) {
            }
            res.table.push_back(pt);
            if (!pt.ok) {
                ++res.failures;
                continue;
            }
            res.max_kkt = std::max(res.max_kkt, pt.kkt);
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
            res.bundle = b;
        }
    }
    if (!found) throw ConvergenceError("no pooled-fit grid point converged", 0.0);
    return res;
}

}  // namespace shir
