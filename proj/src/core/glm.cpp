#include "shir/glm.hpp"

#include <cmath>
#include <string>

#include "shir/errors.hpp"
#include "shir/kernels.hpp"

namespace shir {

namespace {

void check_beta(const StudyData& data, const Vector& beta) {
    if (static_cast<std::size_t>(beta.size()) != data.p())
        throw ContractViolation("coefficient vector has length " + std::to_string(beta.size()) +
                                ", design has " + std::to_string(data.p()) + " columns");
}

}  // namespace

StudyData::StudyData(Matrix X, Vector y, std::string site_id)
    : X_(std::move(X)), y_(std::move(y)), site_id_(std::move(site_id)) {
    const auto tag = site_id_.empty() ? std::string("study") : "site '" + site_id_ + "'";
    if (X_.rows() != y_.size())
        throw ContractViolation(tag + ": X has " + std::to_string(X_.rows()) + " rows but y has " +
                                std::to_string(y_.size()));
    if (X_.rows() < 2) throw DataError(tag + ": need at least 2 observations");
    if (X_.cols() < 2) throw DataError(tag + ": need at least 2 columns (intercept + 1)");
    for (Eigen::Index i = 0; i < X_.rows(); ++i) {
        if (X_(i, 0) != 1.0)
            throw DataError(tag + ": first column must be the intercept (row " + std::to_string(i) +
                            ")");
        if (!std::isfinite(y_[i]))
            throw DataError(tag + ": non-finite response at row " + std::to_string(i));
        for (Eigen::Index j = 0; j < X_.cols(); ++j)
            if (!std::isfinite(X_(i, j)))
                throw DataError(tag + ": non-finite covariate at row " + std::to_string(i) +
                                ", column " + std::to_string(j));
    }
}

StudyData StudyData::subset(std::span<const std::size_t> rows) const {
    Matrix X(static_cast<Eigen::Index>(rows.size()), X_.cols());
    Vector y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        X.row(static_cast<Eigen::Index>(k)) = X_.row(static_cast<Eigen::Index>(rows[k]));
        y[static_cast<Eigen::Index>(k)] = y_[static_cast<Eigen::Index>(rows[k])];
    }
    return StudyData(std::move(X), std::move(y), site_id_);
}

void validate_response(const StudyData& data, LossFamily family) {
    if (family != LossFamily::logistic) return;
    for (Eigen::Index i = 0; i < data.y().size(); ++i) {
        const double v = data.y()[i];
        if (v != 0.0 && v != 1.0)
            throw DataError("logistic response must be coded 0/1; row " + std::to_string(i) +
                            " has " + std::to_string(v));
    }
}

Vector linear_predictor(const StudyData& data, const Vector& beta) {
    check_beta(data, beta);
    Vector eta(static_cast<Eigen::Index>(data.n()));
    const auto b = span(beta);
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = kernels::dot(row(data.X(), i), b);
    return eta;
}

double empirical_loss(const StudyData& data, const Vector& beta, LossFamily family) {
    const Vector eta = linear_predictor(data, beta);
    double total = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double v = loss_value(family, eta[i], data.y()[i]);
        if (!std::isfinite(v))
            throw OverflowError("non-finite loss term", static_cast<std::size_t>(i));
        total += v;
    }
    return total / static_cast<double>(data.n());
}

Vector gradient(const StudyData& data, const Vector& beta, LossFamily family) {
    const Vector eta = linear_predictor(data, beta);
    Vector grad = Vector::Zero(static_cast<Eigen::Index>(data.p()));
    auto out = span(grad);
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double d = loss_d1(family, eta[i], data.y()[i]);
        if (!std::isfinite(d))
            throw OverflowError("non-finite loss derivative", static_cast<std::size_t>(i));
        kernels::axpy(d, row(data.X(), i), out);
    }
    grad /= static_cast<double>(data.n());
    return grad;
}

Matrix weighted_gram(const Matrix& X, const Vector& w) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    Matrix G = Matrix::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double* xi = X.data() + i * p;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double a = w[i] * xi[j];
            if (a == 0.0) continue;
            kernels::active().axpy(a, xi + j, G.data() + j * p + j, static_cast<std::size_t>(p - j));
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = j; k < p; ++k) {
            G(j, k) *= inv_n;
            G(k, j) = G(j, k);
        }
    }
    return G;
}

Matrix hessian(const StudyData& data, const Vector& beta, LossFamily family) {
    const Vector eta = linear_predictor(data, beta);
    Vector w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        w[i] = loss_d2(family, eta[i], data.y()[i]);
        if (!std::isfinite(w[i]))
            throw OverflowError("non-finite loss curvature", static_cast<std::size_t>(i));
    }
    return weighted_gram(data.X(), w);
}

}  // namespace shir
