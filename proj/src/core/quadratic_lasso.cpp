#include "shir/quadratic_lasso.hpp"

#include <algorithm>
#include <cmath>

#include "shir/errors.hpp"
#include "shir/kernels.hpp"

namespace shir {

double soft_threshold(double z, double t) noexcept {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

double quadratic_lasso_objective(const Matrix& A, const Vector& c, const Vector& penalty,
                                 const Vector& beta) {
    return 0.5 * beta.dot(A * beta) - c.dot(beta) + penalty.dot(beta.cwiseAbs());
}

namespace {

// One pass over `coords`; returns the largest scaled change.
template <class Coords>
double sweep(const Matrix& A, const Vector& penalty, Vector& beta, Vector& resid,
             const Coords& coords) {
    double max_change = 0.0;
    auto r = span(resid);
    for (Eigen::Index j : coords) {
        const double a = A(j, j);
        const double old = beta[j];
        double updated;
        if (a > 0.0) {
            updated = soft_threshold(resid[j] + a * old, penalty[j]) / a;
        } else {
            // Flat direction; zero is optimal whenever the linear term is
            // dominated by the penalty, otherwise leave it for the caller.
            updated = std::abs(resid[j]) <= penalty[j] ? 0.0 : old;
        }
        const double delta = updated - old;
        if (delta == 0.0) continue;
        beta[j] = updated;
        kernels::axpy(-delta, row(A, j), r);
        max_change = std::max(max_change, std::abs(delta) * std::sqrt(std::max(a, 0.0)));
    }
    return max_change;
}

struct Range {
    Eigen::Index n;
    struct It {
        Eigen::Index i;
        Eigen::Index operator*() const { return i; }
        It& operator++() { ++i; return *this; }
        bool operator!=(const It& o) const { return i != o.i; }
    };
    It begin() const { return {0}; }
    It end() const { return {n}; }
};

}  // namespace

CdResult solve_quadratic_lasso(const Matrix& A, const Vector& c, const Vector& penalty,
                               Vector& beta, const CdOptions& opts, std::vector<double>* trace) {
    const Eigen::Index p = A.rows();
    if (A.cols() != p || c.size() != p || penalty.size() != p || beta.size() != p)
        throw ContractViolation("quadratic lasso: dimension mismatch");

    Vector resid = c - A * beta;
    CdResult res;
    std::vector<Eigen::Index> active;
    const Range all{p};

    auto record = [&] {
        if (trace) trace->push_back(quadratic_lasso_objective(A, c, penalty, beta));
    };

    while (res.sweeps < opts.max_sweeps) {
        res.max_change = sweep(A, penalty, beta, resid, all);
        ++res.sweeps;
        record();
        if (res.max_change < opts.tol) {
            res.converged = true;
            break;
        }
        active.clear();
        for (Eigen::Index j = 0; j < p; ++j)
            if (beta[j] != 0.0) active.push_back(j);
        while (res.sweeps < opts.max_sweeps) {
            const double chg = sweep(A, penalty, beta, resid, active);
            ++res.sweeps;
            record();
            if (chg < opts.tol) break;
        }
    }
    return res;
}

double lasso_kkt_residual(const Vector& grad, const Vector& beta, const Vector& penalty) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < grad.size(); ++j) {
        double v;
        if (penalty[j] == 0.0)
            v = std::abs(grad[j]);
        else if (beta[j] != 0.0)
            v = std::abs(grad[j] + penalty[j] * (beta[j] > 0 ? 1.0 : -1.0));
        else
            v = std::max(0.0, std::abs(grad[j]) - penalty[j]);
        worst = std::max(worst, v);
    }
    return worst;
}

}  // namespace shir
