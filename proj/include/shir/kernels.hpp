#pragma once

// Dense double-precision kernels used by every inner loop in the library.
//
// Each kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA implementation. The backend is picked once at first use from the
// CPU feature bits; setting SHIR_KERNELS=scalar in the environment forces the
// reference path. Within one process the choice is fixed, so results are
// deterministic run to run on the same machine.

#include <cstddef>
#include <span>
#include <string_view>

namespace shir::kernels {

enum class Backend { scalar, avx2 };

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // sum_i w[i] * x[i] * z[i]
    double (*wdot)(const double* w, const double* x, const double* z, std::size_t n);
};

/// Reference implementations. Always available.
const KernelTable& scalar_table() noexcept;

/// AVX2+FMA implementations, or nullptr if the build or the CPU lacks them.
const KernelTable* avx2_table() noexcept;

/// Table in use by the free functions below.
const KernelTable& active() noexcept;
Backend active_backend() noexcept;
std::string_view backend_name(Backend b) noexcept;

/// Override the runtime choice (tests only). Returns false if the requested
/// backend is unavailable, in which case nothing changes.
bool force_backend(Backend b) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double wdot(std::span<const double> w, std::span<const double> x,
                   std::span<const double> z) noexcept {
    return active().wdot(w.data(), x.data(), z.data(), w.size());
}

}  // namespace shir::kernels
