#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "shir/aggregator.hpp"

namespace shir {

/// Long-format CSV: site,index,mu,alpha,beta with one row per (site, index).
void write_bundle_csv(const std::filesystem::path& path, const CoefficientBundle& b,
                      const std::vector<std::string>& site_ids);

struct NamedBundle {
    CoefficientBundle bundle;
    std::vector<std::string> site_ids;
};

NamedBundle read_bundle_csv(const std::filesystem::path& path);

}  // namespace shir
