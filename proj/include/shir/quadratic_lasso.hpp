#pragma once

#include <vector>

#include "shir/linalg.hpp"

namespace shir {

// Cyclic coordinate descent for
//
//     minimize  0.5 b'A b - c'b + sum_j penalty_j |b_j|
//
// with A symmetric PSD. A zero penalty leaves the coordinate free. Sweeps
// alternate between all coordinates and the current nonzero set.

struct CdOptions {
    double tol = 1e-9;        // max scaled coordinate change |db_j| sqrt(A_jj)
    int max_sweeps = 10000;
};

struct CdResult {
    int sweeps = 0;
    bool converged = false;
    double max_change = 0.0;
};

double soft_threshold(double z, double t) noexcept;

double quadratic_lasso_objective(const Matrix& A, const Vector& c, const Vector& penalty,
                                 const Vector& beta);

/// `beta` is the warm start on entry and the solution on exit. When `trace`
/// is given, the objective after every sweep is appended to it.
CdResult solve_quadratic_lasso(const Matrix& A, const Vector& c, const Vector& penalty,
                               Vector& beta, const CdOptions& opts = {},
                               std::vector<double>* trace = nullptr);

/// Largest violation of the subgradient conditions for
/// min f(b) + sum_j penalty_j |b_j| given grad = nabla f(b).
double lasso_kkt_residual(const Vector& grad, const Vector& beta, const Vector& penalty);

}  // namespace shir
