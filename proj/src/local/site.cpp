#include "shir/site.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "shir/envelope.hpp"
#include "shir/errors.hpp"
#include "shir/transport.hpp"

namespace shir {

namespace {

bool parse_row(const std::string& line, std::vector<double>& out) {
    out.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        if (b == std::string::npos) return false;
        cell = cell.substr(b, e - b + 1);
        std::size_t used = 0;
        try {
            out.push_back(std::stod(cell, &used));
        } catch (const std::exception&) {
            return false;
        }
        if (used != cell.size()) return false;
    }
    return !out.empty();
}

}  // namespace

StudyData read_study_csv(const std::filesystem::path& path, const std::string& site_id) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::vector<double> row;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (!parse_row(line, row)) {
            if (rows.empty() && lineno == 1) continue;  // header
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric field");
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(rows.front().size()) + " fields, got " +
                            std::to_string(row.size()));
        rows.push_back(row);
    }
    if (rows.empty()) throw DataError("data file '" + path.string() + "' has no rows");
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto cols = static_cast<Eigen::Index>(rows.front().size());
    if (cols < 2) throw DataError("data file '" + path.string() + "' needs a response and a covariate");
    Matrix X(n, cols);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        y[i] = r[0];
        X(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < cols; ++j) X(i, j) = r[static_cast<std::size_t>(j)];
    }
    return StudyData(std::move(X), std::move(y), site_id);
}

void write_study_csv(const std::filesystem::path& path, const StudyData& data) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.precision(17);
    out << "y";
    for (std::size_t j = 1; j < data.p(); ++j) out << ",x" << j;
    out << "\n";
    for (Eigen::Index i = 0; i < data.X().rows(); ++i) {
        out << data.y()[i];
        for (Eigen::Index j = 1; j < data.X().cols(); ++j) out << "," << data.X()(i, j);
        out << "\n";
    }
}

LocalSummary run_site(const StudyData& data, const SiteConfig& cfg) {
    const LocalFit fit = fit_site(data, cfg.family, cfg.folds, cfg.seed, cfg.lasso);
    return summarize(data, fit, cfg.family);
}

void serve_site(const std::filesystem::path& data_path, const std::string& site_id,
                const SiteConfig& cfg, const std::string& host, std::uint16_t port,
                std::size_t connections, void (*on_ready)(std::uint16_t)) {
    const StudyData data = read_study_csv(data_path, site_id);
    EnvelopeServer server(encode_summary(run_site(data, cfg)), host, port);
    if (on_ready) on_ready(server.port());
    server.serve(connections);
}

}  // namespace shir
