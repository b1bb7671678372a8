#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>

namespace shir {

enum class LossFamily : std::uint8_t { squared_error = 0, logistic = 1 };

std::string_view to_string(LossFamily f) noexcept;
std::optional<LossFamily> parse_family(std::string_view s) noexcept;

inline double sigmoid(double a) noexcept {
    if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

// log(1 + exp(a)) without overflow.
inline double log1p_exp(double a) noexcept {
    return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a)));
}

/// f(a, y)
inline double loss_value(LossFamily f, double a, double y) noexcept {
    if (f == LossFamily::squared_error) {
        const double r = y - a;
        return r * r;
    }
    return -y * a + log1p_exp(a);
}

/// df/da
inline double loss_d1(LossFamily f, double a, double y) noexcept {
    if (f == LossFamily::squared_error) return -2.0 * (y - a);
    return sigmoid(a) - y;
}

/// d2f/da2
inline double loss_d2(LossFamily f, double a, double /*y*/) noexcept {
    if (f == LossFamily::squared_error) return 2.0;
    const double s = sigmoid(a);
    return s * (1.0 - s);
}

}  // namespace shir
