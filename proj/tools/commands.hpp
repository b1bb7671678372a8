#pragma once

#include <cstdlib>
#include <string>

#include <CLI11.hpp>

namespace shir::cli {

enum Exit : int { ok = 0, usage = 1, data_error = 2, convergence_error = 3 };

// Each registrar adds one subcommand whose callback stores its exit code.
void add_local_fit(CLI::App& app, int& rc);
void add_serve(CLI::App& app, int& rc);
void add_evaluate(CLI::App& app, int& rc);
void add_simulate(CLI::App& app, int& rc);
void add_aggregate(CLI::App& app, int& rc);

inline std::string default_out_dir() {
    const char* env = std::getenv("SHIR_OUT_DIR");
    return env && *env ? env : ".";
}

}  // namespace shir::cli
