#pragma once

// Information-criterion tuning of (lambda, lambda_g) from summaries alone.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "shir/aggregator.hpp"

namespace shir {

std::string_view to_string(GammaSchedule s) noexcept;
std::optional<GammaSchedule> parse_schedule(std::string_view s) noexcept;

/// AIC 2/N, BIC log N / N, mBIC log log p log N / N, RIC 2 log p / N.
double gamma_n(GammaSchedule s, std::uint64_t N, std::size_t p);

/// N^-1 sum_m n_m (b_m' H_m b_m - 2 g_m' b_m)
double deviance(std::span<const LocalSummary> summaries, const CoefficientBundle& bundle);

/// trace(Q^-1 L) on the active parameters with the first site's deviation
/// eliminated. Q adds the group-penalty curvature of active groups to the
/// loss Hessian L. Intercepts (mu_0 and every site's alpha_0) always count.
double degrees_of_freedom(std::span<const LocalSummary> summaries,
                          const CoefficientBundle& bundle, const PenaltyConfig& cfg);

struct GicPoint {
    double lambda = 0.0;
    double lambda_g = 0.0;
    bool ok = false;  // converged and DF defined
    double deviance = 0.0;
    double df = 0.0;
    double gic = 0.0;
    double kkt = 0.0;
};

struct GicResult {
    double lambda = 0.0;
    double lambda_g = 0.0;
    double deviance = 0.0;
    double df = 0.0;
    double gic = 0.0;
    CoefficientBundle bundle;
    std::vector<GicPoint> table;  // every grid point, lambda_g major, lambda descending
    double max_kkt = 0.0;         // over converged points
    int failures = 0;
};

struct GicOptions {
    ShirOptions solver;
    unsigned threads = 1;  // lambda_g paths run concurrently
};

/// {1/4, 1/2, 1, 2, 4} / sqrt(M)
std::vector<double> default_lambda_g_grid(std::size_t sites);

/// `count` log-spaced values from lambda_crit (at the smallest lambda_g) down
/// to `ratio` times that.
std::vector<double> default_lambda_grid(std::span<const LocalSummary> summaries,
                                        std::span<const double> lambda_g_grid,
                                        std::size_t count = 50, double ratio = 1e-2);

/// Solves every grid point, warm-starting along decreasing lambda, and keeps
/// the GIC minimizer. Ties go to the larger lambda, then the larger lambda_g.
/// Throws ConvergenceError if no point converges.
GicResult select_by_gic(std::span<const LocalSummary> summaries,
                        std::span<const double> lambda_grid,
                        std::span<const double> lambda_g_grid, GammaSchedule schedule,
                        const GicOptions& opts = {});

}  // namespace shir
