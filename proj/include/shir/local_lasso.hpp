#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shir/glm.hpp"
#include "shir/summary.hpp"

namespace shir {

struct CvPoint {
    double lambda;
    double mean_loss;
};

/// Output of the per-site cross-validated fit.
struct LocalFit {
    Vector beta;
    double lambda_m = 0.0;
    std::vector<CvPoint> cv_curve;  // grid order, i.e. descending lambda
};

struct LassoOptions {
    // Penalize column j by lambda * sd_j (equivalent to fitting on columns
    // scaled to unit standard deviation and mapping back).
    bool standardize = true;
    int max_outer = 50;          // IRLS iterations (logistic)
    int max_sweeps = 10000;      // coordinate sweeps per quadratic subproblem
    double tol = 1e-9;           // max coefficient change
    double kkt_tol = 1e-7;
};

struct LassoDiagnostics {
    int outer_iterations = 0;
    int sweeps = 0;
    double kkt = 0.0;
    // Penalized surrogate objective after each sweep, one list per IRLS step.
    std::vector<std::vector<double>> sweep_objectives;
    // Penalized objective at the start and after each accepted IRLS step.
    std::vector<double> outer_objectives;
};

/// Per-coordinate penalty weights: 0 for the intercept, the column standard
/// deviation (or 1 without standardization) otherwise.
Vector penalty_weights(const StudyData& data, bool standardize);

/// L(beta) + lambda * sum_{j>=1} w_j |beta_j|
double lasso_objective(const StudyData& data, LossFamily family, double lambda,
                       const Vector& weights, const Vector& beta);

double lasso_kkt(const StudyData& data, LossFamily family, double lambda, const Vector& weights,
                 const Vector& beta);

/// Intercept-only minimizer of the empirical loss.
Vector null_fit(const StudyData& data, LossFamily family);

/// Smallest lambda whose solution has every penalized coefficient at zero.
double lambda_max(const StudyData& data, LossFamily family, const Vector& weights);

/// `count` log-spaced values from `top` down to `ratio * top`.
std::vector<double> log_grid(double top, std::size_t count, double ratio);

/// Penalized fit at a single lambda. Throws ConvergenceError if the KKT
/// residual at the iteration cap exceeds `opts.kkt_tol`.
Vector fit_local_lasso(const StudyData& data, LossFamily family, double lambda,
                       const LassoOptions& opts = {}, const Vector* warm_start = nullptr,
                       LassoDiagnostics* diag = nullptr);

/// K-fold cross-validation over a strictly decreasing grid, then a refit on
/// all rows at the selected lambda. Folds come from a permutation seeded by
/// `seed`.
LocalFit cross_validate_lambda(const StudyData& data, LossFamily family, int folds,
                               std::span<const double> grid, std::uint64_t seed,
                               const LassoOptions& opts = {});

/// Default site workflow: 100-point grid down to 1e-3 * lambda_max, K folds.
LocalFit fit_site(const StudyData& data, LossFamily family, int folds, std::uint64_t seed,
                  const LassoOptions& opts = {});

/// H = hessian at the fitted beta, g = H beta - gradient.
LocalSummary summarize(const StudyData& data, const LocalFit& fit, LossFamily family);

}  // namespace shir
