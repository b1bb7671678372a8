#include "kernels_impl.hpp"

namespace shir::kernels::detail {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double wdot_scalar(const double* w, const double* x, const double* z, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * x[i] * z[i];
    return s;
}

constexpr KernelTable kScalar{dot_scalar, axpy_scalar, wdot_scalar};

}  // namespace

const KernelTable& scalar_impl() noexcept { return kScalar; }

}  // namespace shir::kernels::detail
