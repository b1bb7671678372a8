#pragma once

// Site-side workflow: load raw data, fit, and hand out only the summary.

#include <cstdint>
#include <filesystem>
#include <string>

#include "shir/local_lasso.hpp"

namespace shir {

/// CSV with the response in the first column and covariates after it. A
/// non-numeric first row is treated as a header. The intercept column is
/// added here.
StudyData read_study_csv(const std::filesystem::path& path, const std::string& site_id);

/// Writes the same layout back (no intercept column, header y,x1,...).
void write_study_csv(const std::filesystem::path& path, const StudyData& data);

struct SiteConfig {
    LossFamily family = LossFamily::logistic;
    int folds = 10;
    std::uint64_t seed = 0;
    LassoOptions lasso;
};

LocalSummary run_site(const StudyData& data, const SiteConfig& cfg);

/// Fits the site at `data_path` and answers `connections` requests on
/// host:port with its envelope (0 = until the process is stopped).
/// `on_ready` receives the bound port before serving starts.
void serve_site(const std::filesystem::path& data_path, const std::string& site_id,
                const SiteConfig& cfg, const std::string& host, std::uint16_t port,
                std::size_t connections, void (*on_ready)(std::uint16_t) = nullptr);

}  // namespace shir
