#include <iostream>

#include "commands.hpp"
#include "shir/errors.hpp"

int main(int argc, char** argv) {
    using namespace shir;
    CLI::App app{"Integrative sparse regression from per-site summary statistics"};
    app.require_subcommand(1);
    int rc = cli::ok;
    cli::add_local_fit(app, rc);
    cli::add_aggregate(app, rc);
    cli::add_simulate(app, rc);
    cli::add_evaluate(app, rc);
    cli::add_serve(app, rc);
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::usage;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::convergence_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::data_error;
    }
    return rc;
}
