// Central side. Compiled with SHIR_CENTRAL_ONLY: only envelopes come in.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "commands.hpp"
#include "shir/bundle_io.hpp"
#include "shir/transport.hpp"
#include "shir/tuning.hpp"

namespace shir::cli {

namespace {

struct AggregateArgs {
    std::vector<std::string> sources;
    std::string manifest;
    std::string schedule = "bic";
    std::vector<double> lambda_grid;
    std::vector<double> lambda_g_grid;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    int attempts = 3;
    int max_sweeps = 20000;
    std::string out;
};

int run(const AggregateArgs& a) {
    RunManifest m;
    if (!a.manifest.empty()) m = read_manifest(a.manifest);
    m.sites.insert(m.sites.end(), a.sources.begin(), a.sources.end());
    if (m.sites.empty()) {
        std::cerr << "error: no envelopes given\n";
        return usage;
    }
    if (const auto s = parse_schedule(a.schedule)) m.schedule = *s;
    if (!a.lambda_grid.empty()) m.lambda_grid = a.lambda_grid;
    if (!a.lambda_g_grid.empty()) m.lambda_g_grid = a.lambda_g_grid;
    if (a.seed) m.seed = a.seed;
    if (!a.out.empty() || a.manifest.empty()) m.out_dir = a.out.empty() ? default_out_dir() : a.out;

    FetchOptions fo;
    fo.attempts = a.attempts;
    const std::vector<LocalSummary> sums = collect(m, fo);
    for (const auto& s : sums) validate(s);

    const auto lg = m.lambda_g_grid.empty() ? default_lambda_g_grid(sums.size()) : m.lambda_g_grid;
    const auto grid = m.lambda_grid.empty() ? default_lambda_grid(sums, lg) : m.lambda_grid;
    GicOptions go;
    go.threads = a.threads;
    go.solver.max_sweeps = a.max_sweeps;
    const GicResult res = select_by_gic(sums, grid, lg, m.schedule, go);

    const std::filesystem::path dir(m.out_dir);
    std::filesystem::create_directories(dir);
    std::vector<std::string> ids;
    for (const auto& s : sums) ids.push_back(s.site_id);
    write_bundle_csv(dir / "bundle.csv", res.bundle, ids);
    {
        std::ofstream out(dir / "gic_table.csv");
        out.precision(12);
        out << "lambda,lambda_g,converged,deviance,df,gic,kkt\n";
        for (const auto& pt : res.table)
            out << pt.lambda << "," << pt.lambda_g << "," << (pt.ok ? 1 : 0) << "," << pt.deviance << ","
                << pt.df << "," << pt.gic << "," << pt.kkt << "\n";
    }
    {
        std::ofstream out(dir / "selection.txt");
        out.precision(17);
        out << "schedule=" << to_string(m.schedule) << "\nlambda=" << res.lambda << "\nlambda_g=" << res.lambda_g
            << "\ndeviance=" << res.deviance << "\ndf=" << res.df << "\ngic=" << res.gic
            << "\nobjective=" << shir_objective(sums, res.bundle, PenaltyConfig{res.lambda, res.lambda_g, m.schedule})
            << "\nmax_kkt=" << res.max_kkt << "\nfailed_points=" << res.failures << "\n";
    }
    std::ofstream(dir / "manifest.txt") << format_manifest(m);
    std::cout << "selected lambda=" << res.lambda << " lambda_g=" << res.lambda_g << " df=" << res.df
              << " (" << res.bundle.active_mu.size() << " shared, " << res.bundle.active_alpha.size()
              << " heterogeneous)\n";
    return ok;
}

}  // namespace

void add_aggregate(CLI::App& app, int& rc) {
    auto args = std::make_shared<AggregateArgs>();
    auto* sub = app.add_subcommand("aggregate", "Fit the integrative model from site envelopes");
    sub->add_option("envelopes", args->sources, "Envelope files or host:port endpoints");
    sub->add_option("--manifest", args->manifest, "Run manifest (key=value)");
    sub->add_option("--schedule", args->schedule, "Information criterion")
        ->check(CLI::IsMember({"aic", "bic", "mbic", "ric"}));
    sub->add_option("--lambda-grid", args->lambda_grid, "Comma-separated lambda values")->delimiter(',');
    sub->add_option("--lambda-g-grid", args->lambda_g_grid, "Comma-separated lambda_g values")->delimiter(',');
    sub->add_option("--seed", args->seed, "Recorded in the manifest");
    sub->add_option("--threads", args->threads, "Concurrent lambda_g paths")->check(CLI::PositiveNumber);
    sub->add_option("--attempts", args->attempts, "Connection attempts per endpoint")->check(CLI::PositiveNumber);
    sub->add_option("--max-sweeps", args->max_sweeps, "Coordinate sweep cap per solve")->check(CLI::PositiveNumber);
    sub->add_option("--out", args->out, "Output directory (default $SHIR_OUT_DIR or .)");
    sub->callback([args, &rc] { rc = run(*args); });
}

}  // namespace shir::cli
