#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"

namespace shir::kernels {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* pick() noexcept {
    if (const char* env = std::getenv("SHIR_KERNELS"); env && std::string_view(env) == "scalar")
        return &detail::scalar_impl();
    if (detail::avx2_impl() && cpu_has_avx2()) return detail::avx2_impl();
    return &detail::scalar_impl();
}

std::atomic<const KernelTable*>& slot() noexcept {
    static std::atomic<const KernelTable*> table{pick()};
    return table;
}

}  // namespace

const KernelTable& scalar_table() noexcept { return detail::scalar_impl(); }

const KernelTable* avx2_table() noexcept {
    return cpu_has_avx2() ? detail::avx2_impl() : nullptr;
}

const KernelTable& active() noexcept { return *slot().load(std::memory_order_relaxed); }

Backend active_backend() noexcept {
    return &active() == &detail::scalar_impl() ? Backend::scalar : Backend::avx2;
}

std::string_view backend_name(Backend b) noexcept {
    return b == Backend::scalar ? "scalar" : "avx2";
}

bool force_backend(Backend b) noexcept {
    const KernelTable* t = b == Backend::scalar ? &detail::scalar_impl() : avx2_table();
    if (!t) return false;
    slot().store(t, std::memory_order_relaxed);
    return true;
}

}  // namespace shir::kernels
