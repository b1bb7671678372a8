#pragma once

// Synthetic multi-site logistic benchmark and the comparison harness.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "shir/baselines.hpp"

namespace shir {

enum class Mechanism {
    strong,        // sparse precision, correct model, strong signal
    weak,          // same design, weak signal
    misspecified,  // dense precision, nonlinear logit
};

std::string_view to_string(Mechanism m) noexcept;
/// Accepts i/ii/iii and the enum names.
std::optional<Mechanism> parse_mechanism(std::string_view s) noexcept;

struct SimSetting {
    Mechanism mechanism = Mechanism::strong;
    std::size_t M = 4;
    std::size_t p = 100;  // covariates, intercept not counted
    std::size_t n = 400;  // per site
    std::size_t replications = 20;
    std::uint64_t seed = 1;
    double signal_scale = 1.0;  // multiplies every coefficient; 0 gives pure noise
};

/// r_m = 0.4 (m - 1) / M + 0.15 for m = 1..M.
double site_correlation(std::size_t m, std::size_t M);

/// AR(1) correlation matrix, entry (i, j) = r^|i - j|.
Matrix ar1_matrix(std::size_t q, double r);

/// q1 x q2, each column with s1 randomly placed entries of +-r.
Matrix loading_matrix(std::size_t q1, std::size_t q2, double r, std::size_t s1, std::mt19937_64& rng);

/// Covariance of the p covariates of site m (1-based). Non-PSD results are
/// repaired by flooring eigenvalues at 1e-8 with a warning on stderr.
Matrix gen_covariance(Mechanism mech, std::size_t m, std::size_t M, std::size_t p,
                      std::uint64_t seed);

/// Coefficients (intercept first) of site m under the correctly specified
/// mechanisms; nullopt for the misspecified one.
std::optional<Vector> true_beta(const SimSetting& s, std::size_t m);

struct SimStudy {
    StudyData data;
    Vector eta;  // true logit of each row
};

/// n rows for site m (1-based) with intercept column. Deterministic in
/// (setting, m, seed).
SimStudy gen_study(const SimSetting& s, std::size_t m, std::uint64_t seed);

/// Seed for replication `rep`, site `m` (splitmix64 of the base seed).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

enum class Method { ipd, shir, debias, sma };
std::string_view to_string(Method m) noexcept;
std::optional<Method> parse_method(std::string_view s) noexcept;

struct ReplicationRow {
    std::size_t rep = 0;
    Method method = Method::ipd;
    bool ok = false;
    std::string error;
    double aee = 0.0;
    double pe = 0.0;
    double raee = 0.0;  // NaN when not defined
    double rpe = 0.0;
    double tpr = 0.0;   // NaN for the misspecified mechanism
    double fdr = 0.0;
    double seconds = 0.0;
};

struct MetricReport {
    Method method = Method::ipd;
    std::size_t count = 0;
    std::size_t failures = 0;
    double aee = 0.0, aee_se = 0.0;
    double pe = 0.0, pe_se = 0.0;
    double raee = 0.0, raee_se = 0.0;
    double rpe = 0.0, rpe_se = 0.0;
    double tpr = 0.0, tpr_se = 0.0;
    double fdr = 0.0, fdr_se = 0.0;
};

struct BenchmarkOptions {
    std::vector<Method> methods{Method::ipd, Method::shir, Method::debias, Method::sma};
    int folds = 10;
    GammaSchedule schedule = GammaSchedule::bic;
    unsigned threads = 1;  // replications in flight
    double kkt_limit = 1e-7;
    bool verbose = false;
};

struct BenchmarkResult {
    SimSetting setting;
    std::vector<ReplicationRow> rows;  // replication-major, method order as requested
    std::vector<MetricReport> reports;
    double shir_max_kkt = 0.0;         // over every converged aggregator solve
    std::size_t shir_kkt_violations = 0;
    double seconds = 0.0;
};

/// Relative error measures need IPD, which is added if missing.
BenchmarkResult run_benchmark(const SimSetting& s, const BenchmarkOptions& opts = {});

/// replications.csv (long format), summary.csv and setting.txt.
void write_benchmark(const BenchmarkResult& r, const std::filesystem::path& dir);

}  // namespace shir
