#pragma once

// The per-site summary triple (n, H, g). This is the only object that crosses
// from a site to the aggregator, so this header deliberately pulls in nothing
// that can hold individual-level records.

#include <cstdint>
#include <string>
#include <vector>

#include "shir/family.hpp"
#include "shir/linalg.hpp"

namespace shir {

inline constexpr std::uint16_t kSummarySchemaVersion = 1;

struct LocalSummary {
    std::string site_id;
    std::uint64_t n = 0;
    Matrix H;  // p x p, symmetric
    Vector g;  // length p
    LossFamily family = LossFamily::logistic;
    double lambda_m = 0.0;
    std::uint16_t schema_version = kSummarySchemaVersion;

    std::size_t p() const noexcept { return static_cast<std::size_t>(g.size()); }
};

bool operator==(const LocalSummary& a, const LocalSummary& b) noexcept;

/// Checks shape, symmetry, finiteness and PSD-ness (min eigenvalue
/// >= -1e-10 * ||H||_2). Throws DataError naming the site.
void validate(const LocalSummary& s);

/// Checks that every summary shares p and family. Throws DataError naming the
/// first mismatching site.
void check_compatible(const std::vector<LocalSummary>& summaries);

}  // namespace shir
