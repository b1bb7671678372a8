#include <algorithm>
#include <cmath>
#include <string>

#include "shir/baselines.hpp"
#include "shir/errors.hpp"

namespace shir {

PrecisionEstimate nodewise_precision(const Matrix& H, std::size_t n, double c) {
    const Eigen::Index p = H.rows();
    if (H.cols() != p || p < 1) throw ContractViolation("nodewise precision needs a square matrix");
    if (n < 2) throw ContractViolation("nodewise precision needs n >= 2");
    Vector scale(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!(H(j, j) > 0.0))
            throw DataError("column " + std::to_string(j) + " has zero weighted variance");
        scale[j] = 1.0 / std::sqrt(H(j, j));
    }
    const Matrix C = scale.asDiagonal() * H * scale.asDiagonal();
    const double lambda =
        c * std::sqrt(std::log(static_cast<double>(std::max<Eigen::Index>(p, 2))) / static_cast<double>(n));

    PrecisionEstimate out;
    out.theta = Matrix::Zero(p, p);
    out.lambdas.assign(static_cast<std::size_t>(p), lambda);
    if (p == 1) {
        out.theta(0, 0) = 1.0 / H(0, 0);
        return out;
    }

    Matrix A(p - 1, p - 1);
    Vector rhs(p - 1), penalty(p - 1), gamma(p - 1);
    std::vector<Eigen::Index> others(static_cast<std::size_t>(p - 1));
    CdOptions cd;
    cd.tol = 1e-10;
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::Index k = 0;
        for (Eigen::Index q = 0; q < p; ++q)
            if (q != j) others[static_cast<std::size_t>(k++)] = q;
        for (Eigen::Index a = 0; a < p - 1; ++a) {
            const Eigen::Index qa = others[static_cast<std::size_t>(a)];
            rhs[a] = C(qa, j);
            penalty[a] = qa == 0 ? 0.0 : lambda;
            for (Eigen::Index b = 0; b < p - 1; ++b) A(a, b) = C(qa, others[static_cast<std::size_t>(b)]);
        }
        gamma.setZero();
        const CdResult r = solve_quadratic_lasso(A, rhs, penalty, gamma, cd);
        if (!r.converged) throw ConvergenceError("nodewise regression for column " + std::to_string(j) + " did not converge", r.max_change);
        const double tau2 = C(j, j) - gamma.dot(rhs);
        if (!(tau2 > 0.0))
            throw SingularityError("column " + std::to_string(j) +
                                   " is perfectly explained by the others in the nodewise fit");
        out.theta(j, j) = 1.0 / tau2;
        for (Eigen::Index a = 0; a < p - 1; ++a)
            out.theta(j, others[static_cast<std::size_t>(a)]) = -gamma[a] / tau2;
    }
    out.theta = scale.asDiagonal() * out.theta * scale.asDiagonal();
    return out;
}

PrecisionEstimate nodewise_precision(const StudyData& data, LossFamily family,
                                     const Vector& beta_hat, double c) {
    return nodewise_precision(hessian(data, beta_hat, family), data.n(), c);
}

double threshold_scalar(double x, double tau, ThresholdKind kind) noexcept {
    if (std::abs(x) <= tau) return 0.0;
    if (kind == ThresholdKind::hard) return x;
    return x > 0 ? x - tau : x + tau;
}

Vector threshold_group(const Vector& x, double tau, ThresholdKind kind) {
    const double nrm = x.norm();
    if (nrm <= tau) return Vector::Zero(x.size());
    if (kind == ThresholdKind::hard) return x;
    return x * (1.0 - tau / nrm);
}

DebiasInput prepare_debias(const StudyData& data, LossFamily family, const LocalFit& fit, double c) {
    DebiasInput in;
    in.summary = summarize(data, fit, family);
    in.beta_lasso = fit.beta;
    in.precision = nodewise_precision(in.summary.H, data.n(), c);
    return in;
}

Vector debiased_estimate(const DebiasInput& in) {
    const Vector grad = in.summary.H * in.beta_lasso - in.summary.g;
    return in.beta_lasso - in.precision.theta * grad;
}

namespace {

struct Split {
    Vector mu;
    Matrix alpha;
};

Split debiased_split(std::span<const DebiasInput> inputs) {
    if (inputs.empty()) throw ContractViolation("no sites supplied");
    const auto M = static_cast<Eigen::Index>(inputs.size());
    const auto p = inputs.front().beta_lasso.size();
    Matrix B(M, p);
    for (Eigen::Index m = 0; m < M; ++m) {
        const auto& in = inputs[static_cast<std::size_t>(m)];
        if (in.beta_lasso.size() != p || in.precision.theta.rows() != p)
            throw ContractViolation("site '" + in.summary.site_id + "' is missing a precision estimate of size p");
        B.row(m) = debiased_estimate(in).transpose();
    }
    Split s;
    s.mu = B.colwise().mean().transpose();
    s.alpha = B.rowwise() - s.mu.transpose();
    return s;
}

CoefficientBundle apply_rule(const Split& s, const ThresholdRule& rule) {
    Vector mu = s.mu;
    Matrix alpha = s.alpha;
    for (Eigen::Index j = 1; j < mu.size(); ++j) {
        mu[j] = threshold_scalar(mu[j], rule.tau1, rule.kind);
        alpha.col(j) = threshold_group(s.alpha.col(j), rule.tau2, rule.kind);
    }
    return CoefficientBundle::from_parts(std::move(mu), std::move(alpha));
}

}  // namespace

CoefficientBundle fit_debias_lnb(std::span<const DebiasInput> inputs, const ThresholdRule& rule) {
    if (!(rule.tau1 >= 0.0) || !(rule.tau2 >= 0.0))
        throw ContractViolation("thresholds must be nonnegative");
    return apply_rule(debiased_split(inputs), rule);
}

DebiasTuning tune_debias_lnb(std::span<const DebiasInput> inputs, GammaSchedule schedule,
                             ThresholdKind kind, std::size_t points) {
    if (points < 1) throw ContractViolation("threshold grid needs at least one point");
    const Split s = debiased_split(inputs);
    const auto M = static_cast<double>(inputs.size());
    std::vector<LocalSummary> sums;
    std::uint64_t N = 0;
    for (const auto& in : inputs) {
        sums.push_back(in.summary);
        N += in.summary.n;
    }
    const double gamma = gamma_n(schedule, N, inputs.front().summary.p());

    double top1 = 0.0, top2 = 0.0;
    for (Eigen::Index j = 1; j < s.mu.size(); ++j) {
        top1 = std::max(top1, std::abs(s.mu[j]));
        top2 = std::max(top2, s.alpha.col(j).norm());
    }
    auto grid = [points](double top, std::size_t k) {
        return points == 1 ? top : top * static_cast<double>(k) / static_cast<double>(points - 1);
    };

    DebiasTuning best;
    bool found = false;
    // Descending thresholds so that ties keep the sparser model.
    for (std::size_t a = points; a-- > 0;) {
        for (std::size_t b = points; b-- > 0;) {
            const ThresholdRule rule{kind, grid(top1, a), grid(top2, b)};
            CoefficientBundle bundle = apply_rule(s, rule);
            const double df = static_cast<double>(bundle.active_mu.size()) +
                              (M - 1.0) * static_cast<double>(bundle.active_alpha.size()) + M;
            const double gic = deviance(sums, bundle) + gamma * df;
            if (found && !(gic < best.gic)) continue;
            found = true;
            best = {std::move(bundle), rule, gic};
        }
    }
    return best;
}

}  // namespace shir
