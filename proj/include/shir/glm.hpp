#pragma once

// Individual-level data and the empirical loss it defines. Nothing in the
// central aggregation library may include this header.
#ifdef SHIR_CENTRAL_ONLY
#error "shir/glm.hpp holds individual-level data and is off limits to central code"
#endif

#include <string>

#include "shir/family.hpp"
#include "shir/linalg.hpp"

namespace shir {

/// One site's design and response. Immutable after construction.
///
/// The first column of X is the intercept and must equal 1 exactly.
class StudyData {
public:
    StudyData(Matrix X, Vector y, std::string site_id = {});

    const Matrix& X() const noexcept { return X_; }
    const Vector& y() const noexcept { return y_; }
    const std::string& site_id() const noexcept { return site_id_; }
    std::size_t n() const noexcept { return static_cast<std::size_t>(X_.rows()); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(X_.cols()); }

    /// Rows selected by index, same site id.
    StudyData subset(std::span<const std::size_t> rows) const;

private:
    Matrix X_;
    Vector y_;
    std::string site_id_;
};

/// Rejects responses outside {0, 1} for the logistic family.
void validate_response(const StudyData& data, LossFamily family);

/// Linear predictors X * beta.
Vector linear_predictor(const StudyData& data, const Vector& beta);

/// n^-1 sum_i f(beta'X_i, Y_i)
double empirical_loss(const StudyData& data, const Vector& beta, LossFamily family);

/// n^-1 sum_i f'(beta'X_i, Y_i) X_i
Vector gradient(const StudyData& data, const Vector& beta, LossFamily family);

/// n^-1 sum_i f''(beta'X_i, Y_i) X_i X_i'. The upper triangle is accumulated
/// and mirrored, so the result is exactly symmetric.
Matrix hessian(const StudyData& data, const Vector& beta, LossFamily family);

/// n^-1 sum_i w_i X_i X_i', upper triangle mirrored.
Matrix weighted_gram(const Matrix& X, const Vector& w);

}  // namespace shir
