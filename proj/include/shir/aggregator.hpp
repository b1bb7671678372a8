#pragma once

// Central solver for the summary-statistics surrogate
//
//   N^-1 sum_m n_m (b_m' H_m b_m - 2 b_m' g_m)
//       + lambda (sum_{j>=1} |mu_j| + lambda_g sum_{j>=1} ||alpha_j||_2)
//
// with b_m = mu + alpha_m and sum_m alpha_m = 0. Index 0 is the intercept and
// carries no penalty. Only LocalSummary objects are accepted here.

#include <cstddef>
#include <span>
#include <vector>

#include "shir/summary.hpp"

namespace shir {

enum class GammaSchedule { aic, bic, mbic, ric };

struct PenaltyConfig {
    double lambda = 0.0;
    double lambda_g = 1.0;
    GammaSchedule schedule = GammaSchedule::bic;
};

/// Shared effect mu, per-site deviations alpha (rows), and derived betas.
struct CoefficientBundle {
    Vector mu;                              // p
    Matrix alpha;                           // M x p, columns sum to zero
    Matrix beta;                            // M x p, beta row m = mu + alpha row m
    std::vector<std::size_t> active_mu;     // j >= 1 with mu_j != 0
    std::vector<std::size_t> active_alpha;  // j >= 1 with ||alpha_j|| != 0

    std::size_t sites() const noexcept { return static_cast<std::size_t>(alpha.rows()); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(mu.size()); }

    static CoefficientBundle zeros(std::size_t sites, std::size_t p);
    /// Fills beta and the active sets from mu and alpha.
    static CoefficientBundle from_parts(Vector mu, Matrix alpha);
};

struct ShirOptions {
    double objective_tol = 1e-10;  // relative change per sweep
    double block_tol = 1e-10;      // inner majorize-minimize step size
    double kkt_tol = 1e-8;         // required at return
    int max_sweeps = 20000;
    int max_block_iterations = 100000;
};

struct ShirDiagnostics {
    int sweeps = 0;
    double kkt = 0.0;
    std::vector<double> objective_trace;  // objective after each sweep
    // Largest |sum_m alpha_jm| seen across all iterates.
    double max_constraint_violation = 0.0;
};

double shir_objective(std::span<const LocalSummary> summaries, const CoefficientBundle& bundle,
                      const PenaltyConfig& cfg);

/// Block coordinate descent. `warm_start`, if given, must satisfy the
/// sum-to-zero constraint. Site order in `summaries` only permutes the rows
/// of alpha in the result; mu and the objective are bitwise unaffected.
CoefficientBundle solve_shir(std::span<const LocalSummary> summaries, const PenaltyConfig& cfg,
                             const ShirOptions& opts = {},
                             const CoefficientBundle* warm_start = nullptr,
                             ShirDiagnostics* diag = nullptr);

/// Largest violation of the constrained optimality conditions.
double kkt_residual(std::span<const LocalSummary> summaries, const CoefficientBundle& bundle,
                    const PenaltyConfig& cfg);

/// Minimizer over the unpenalized intercept block only (all j >= 1 zero).
CoefficientBundle intercept_only(std::span<const LocalSummary> summaries);

/// Smallest lambda for which, at the given lambda_g, every penalized
/// coordinate is zero at the solution.
double lambda_critical(std::span<const LocalSummary> summaries, double lambda_g);

/// Site order used internally: by site id, then by content.
std::vector<std::size_t> canonical_site_order(std::span<const LocalSummary> summaries);

}  // namespace shir
