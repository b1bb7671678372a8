#pragma once

#include <span>

#include <Eigen/Dense>

namespace shir {

// Row-major so a row (and, for symmetric matrices, a column) is contiguous and
// can be handed to the kernels as a span.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::span<const double> row(const Matrix& m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<double> row(Matrix& m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<const double> span(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<double> span(Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace shir
