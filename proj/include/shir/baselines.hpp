#pragma once

// Comparators for the summary-based estimator: the pooled-data fit (needs
// raw data from every site), debiased-lasso averaging with thresholding, and
// sparse meta-analysis of screened per-site MLEs.

#include <cstdint>
#include <span>
#include <vector>

#include "shir/glm.hpp"
#include "shir/local_lasso.hpp"
#include "shir/quadratic_lasso.hpp"
#include "shir/tuning.hpp"

namespace shir {

// ---- pooled individual-level fit ------------------------------------------

struct IpdOptions {
    ShirOptions solver;
    int max_newton = 100;
    double tol = 1e-10;      // relative objective change counted as a stall
    double kkt_tol = 1e-7;
};

/// Minimizes 2 N^-1 sum_m n_m L_m(mu + alpha_m) + lambda rho(mu, alpha) with
/// the same penalty as the aggregator, so for squared-error loss the result
/// coincides with solve_shir on exact summaries. Proximal Newton: each step
/// solves the aggregator problem on summaries taken at the current iterate.
CoefficientBundle fit_ipd(std::span<const StudyData> sites, LossFamily family,
                          const PenaltyConfig& cfg, const IpdOptions& opts = {},
                          const CoefficientBundle* warm_start = nullptr);

/// 2 N^-1 sum_m n_m L_m(beta_m) + lambda rho
double ipd_objective(std::span<const StudyData> sites, LossFamily family,
                     const CoefficientBundle& bundle, const PenaltyConfig& cfg);

/// Summaries taken at each site's current coefficients (no local fit).
std::vector<LocalSummary> expand_at(std::span<const StudyData> sites, LossFamily family,
                                    const CoefficientBundle& bundle);

/// Same grids and criterion as select_by_gic, with deviance 2 N^-1 sum n_m L_m
/// and DF taken from the Hessians at each solution.
GicResult fit_ipd_gic(std::span<const StudyData> sites, LossFamily family,
                      std::span<const double> lambda_grid, std::span<const double> lambda_g_grid,
                      GammaSchedule schedule, const IpdOptions& opts = {});

/// Critical lambda for the pooled problem at the smallest lambda_g.
std::vector<double> default_ipd_lambda_grid(std::span<const StudyData> sites, LossFamily family,
                                            std::span<const double> lambda_g_grid,
                                            std::size_t count = 50, double ratio = 1e-2);

// ---- debiased lasso with thresholding -------------------------------------

struct PrecisionEstimate {
    Matrix theta;                 // p x p regularized inverse
    std::vector<double> lambdas;  // nodewise penalty used for each column
};

/// Default constant in the nodewise penalty c * sqrt(log p / n).
inline constexpr double kNodewiseConstant = 0.5;

/// Nodewise lasso on the Gram matrix H (diagonal scaled to one first); the
/// intercept coefficient in each nodewise regression is left unpenalized.
/// A constant c of 0 gives the exact inverse when H is nonsingular.
PrecisionEstimate nodewise_precision(const Matrix& H, std::size_t n,
                                     double c = kNodewiseConstant);

/// Same, with H the Hessian of the site's loss at beta_hat.
PrecisionEstimate nodewise_precision(const StudyData& data, LossFamily family,
                                     const Vector& beta_hat, double c = kNodewiseConstant);

enum class ThresholdKind { hard, soft };

struct ThresholdRule {
    ThresholdKind kind = ThresholdKind::soft;
    double tau1 = 0.0;  // shared effects, elementwise
    double tau2 = 0.0;  // deviation groups
};

double threshold_scalar(double x, double tau, ThresholdKind kind) noexcept;
/// x 1(||x|| > tau) or x (1 - tau/||x||)_+
Vector threshold_group(const Vector& x, double tau, ThresholdKind kind);

/// One site's contribution: local lasso fit plus precision estimate.
struct DebiasInput {
    LocalSummary summary;  // H and g at the lasso fit
    Vector beta_lasso;
    PrecisionEstimate precision;
};

DebiasInput prepare_debias(const StudyData& data, LossFamily family, const LocalFit& fit,
                           double c = kNodewiseConstant);

/// beta_lasso - Theta (H beta_lasso - g)
Vector debiased_estimate(const DebiasInput& in);

/// Average, split into mu and alpha, and threshold (index 0 untouched).
CoefficientBundle fit_debias_lnb(std::span<const DebiasInput> inputs, const ThresholdRule& rule);

struct DebiasTuning {
    CoefficientBundle bundle;
    ThresholdRule rule;
    double gic = 0.0;
};

/// Picks (tau1, tau2) from `points`-point linear grids on [0, max] by
/// summary deviance + gamma_N (|S_mu| + (M - 1)|S_alpha| + M).
DebiasTuning tune_debias_lnb(std::span<const DebiasInput> inputs, GammaSchedule schedule,
                             ThresholdKind kind = ThresholdKind::soft, std::size_t points = 30);

// ---- sparse meta-analysis --------------------------------------------------

/// floor(n / (3 log n))
std::size_t sma_screen_dim(std::size_t n);

/// Indices (>= 1) of the `keep` covariates with the largest absolute pooled
/// marginal correlation with the response, in increasing order.
std::vector<std::size_t> marginal_screen(std::span<const StudyData> sites, std::size_t keep);

/// Unpenalized Newton fit on all columns. Throws DataError naming the site if
/// the fit diverges (e.g. separation).
Vector fit_mle(const StudyData& data, LossFamily family);

struct SmaOptions {
    int lla_rounds = 5;
    double epsilon = 1e-8;
    std::size_t grid_points = 30;
    double grid_ratio = 1e-3;
    CdOptions cd;
};

struct SmaResult {
    CoefficientBundle bundle;
    double lambda = 0.0;
    std::vector<std::size_t> screened;  // covariates kept (plus intercept)
};

/// Per-site MLE on the screened covariates, then the inverse-variance
/// quadratic with penalty lambda sum_j ||beta_j||_1^(1/2), solved by local
/// linear approximation. `screen_dim` >= p - 1 disables screening.
SmaResult fit_sma(std::span<const StudyData> sites, LossFamily family, std::size_t screen_dim,
                  double lambda, const SmaOptions& opts = {});

/// fit_sma over a lambda grid, selected by BIC-type GIC with DF = nonzeros.
SmaResult tune_sma(std::span<const StudyData> sites, LossFamily family, std::size_t screen_dim,
                   GammaSchedule schedule, const SmaOptions& opts = {});

}  // namespace shir
