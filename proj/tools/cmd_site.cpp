#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "commands.hpp"
#include "shir/bundle_io.hpp"
#include "shir/envelope.hpp"
#include "shir/site.hpp"

namespace shir::cli {

namespace {

struct SiteArgs {
    std::string data;
    std::string site_id;
    std::string family = "logistic";
    int folds = 10;
    std::uint64_t seed = 0;
    std::string out;
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    std::size_t connections = 0;
};

SiteConfig site_config(const SiteArgs& a) {
    SiteConfig cfg;
    cfg.family = *parse_family(a.family);
    cfg.folds = a.folds;
    cfg.seed = a.seed;
    return cfg;
}

std::string site_name(const SiteArgs& a) {
    return a.site_id.empty() ? std::filesystem::path(a.data).stem().string() : a.site_id;
}

void add_site_options(CLI::App* sub, SiteArgs& a) {
    sub->add_option("--data", a.data, "CSV: response first, then covariates")->required();
    sub->add_option("--site-id", a.site_id, "Site identifier (default: file stem)");
    sub->add_option("--family", a.family, "Loss family")
        ->check(CLI::IsMember({"logistic", "squared-error", "linear", "gaussian", "binomial"}));
    sub->add_option("--folds", a.folds, "Cross-validation folds")->check(CLI::Range(2, 1 << 30));
    sub->add_option("--seed", a.seed, "Fold assignment seed");
}

int local_fit(const SiteArgs& a) {
    const auto cfg = site_config(a);
    const StudyData data = read_study_csv(a.data, site_name(a));
    const LocalSummary s = run_site(data, cfg);
    const std::filesystem::path dir(a.out.empty() ? default_out_dir() : a.out);
    std::filesystem::create_directories(dir);
    const auto path = dir / (s.site_id + ".shir");
    write_envelope(path, s);
    std::cout << path.string() << "\n";
    return ok;
}

int serve(const SiteArgs& a) {
    serve_site(a.data, site_name(a), site_config(a), a.host, a.port, a.connections, [](std::uint16_t port) {
        std::cout << "listening on port " << port << std::endl;
    });
    return ok;
}

double auc(const Vector& score, const Vector& y) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(score.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return score[a] < score[b]; });
    // Mann-Whitney with midranks for ties.
    double pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && score[idx[j]] == score[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (y[idx[k]] == 1.0) {
                rank_sum += mid;
                pos += 1.0;
            }
        i = j;
    }
    const double neg = static_cast<double>(score.size()) - pos;
    if (pos == 0.0 || neg == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

struct EvalArgs {
    std::string bundle;
    std::string data;
    std::string site;
    std::string family = "logistic";
    std::string out;
};

int evaluate(const EvalArgs& a) {
    const NamedBundle nb = read_bundle_csv(a.bundle);
    const LossFamily fam = *parse_family(a.family);
    const StudyData data = read_study_csv(a.data, a.site);
    Vector beta = nb.bundle.mu;
    if (!a.site.empty()) {
        const auto it = std::find(nb.site_ids.begin(), nb.site_ids.end(), a.site);
        if (it == nb.site_ids.end()) throw DataError("site '" + a.site + "' is not in the bundle");
        beta = nb.bundle.beta.row(it - nb.site_ids.begin()).transpose();
    }
    if (static_cast<std::size_t>(beta.size()) != data.p())
        throw DataError("bundle has p = " + std::to_string(beta.size()) + " but the data have " +
                        std::to_string(data.p()) + " columns");
    validate_response(data, fam);
    const Vector eta = linear_predictor(data, beta);
    std::ostringstream report;
    report.precision(10);
    report << "n=" << data.n() << "\ncoefficients=" << (a.site.empty() ? "shared" : a.site)
           << "\nmean_loss=" << empirical_loss(data, beta, fam) << "\n";
    if (fam == LossFamily::logistic) {
        double brier = 0.0;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double d = sigmoid(eta[i]) - data.y()[i];
            brier += d * d;
        }
        report << "brier=" << brier / static_cast<double>(eta.size()) << "\nauc=" << auc(eta, data.y()) << "\n";
    } else {
        report << "mse=" << (data.y() - eta).squaredNorm() / static_cast<double>(eta.size()) << "\n";
    }
    std::cout << report.str();
    const std::filesystem::path dir(a.out.empty() ? default_out_dir() : a.out);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "evaluation.txt") << report.str();
    return ok;
}

}  // namespace

void add_local_fit(CLI::App& app, int& rc) {
    auto a = std::make_shared<SiteArgs>();
    auto* sub = app.add_subcommand("local-fit", "Fit one site and write its summary envelope");
    add_site_options(sub, *a);
    sub->add_option("--out", a->out, "Output directory (default $SHIR_OUT_DIR or .)");
    sub->callback([a, &rc] { rc = local_fit(*a); });
}

void add_serve(CLI::App& app, int& rc) {
    auto a = std::make_shared<SiteArgs>();
    auto* sub = app.add_subcommand("serve", "Fit one site and serve its envelope over TCP");
    add_site_options(sub, *a);
    sub->add_option("--host", a->host, "IPv4 listen address");
    sub->add_option("--port", a->port, "Port (0 picks a free one)");
    sub->add_option("--connections", a->connections, "Exit after this many requests (0 = never)");
    sub->callback([a, &rc] { rc = serve(*a); });
}

void add_evaluate(CLI::App& app, int& rc) {
    auto a = std::make_shared<EvalArgs>();
    auto* sub = app.add_subcommand("evaluate", "Prediction metrics of a fitted bundle on held-out data");
    sub->add_option("--bundle", a->bundle, "bundle.csv from aggregate")->required();
    sub->add_option("--data", a->data, "Held-out CSV")->required();
    sub->add_option("--site", a->site, "Use this site's coefficients (default: shared effects)");
    sub->add_option("--family", a->family, "Loss family")
        ->check(CLI::IsMember({"logistic", "squared-error", "linear", "gaussian", "binomial"}));
    sub->add_option("--out", a->out, "Output directory (default $SHIR_OUT_DIR or .)");
    sub->callback([a, &rc] { rc = evaluate(*a); });
}

}  // namespace shir::cli
