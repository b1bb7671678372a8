#include "shir/bundle_io.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "shir/errors.hpp"

namespace shir {

void write_bundle_csv(const std::filesystem::path& path, const CoefficientBundle& b,
                      const std::vector<std::string>& site_ids) {
    if (site_ids.size() != b.sites()) throw ContractViolation("one site id per bundle row required");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.precision(17);
    out << "site,index,mu,alpha,beta\n";
    for (std::size_t m = 0; m < b.sites(); ++m)
        for (std::size_t j = 0; j < b.p(); ++j) {
            const auto M = static_cast<Eigen::Index>(m), J = static_cast<Eigen::Index>(j);
            out << site_ids[m] << "," << j << "," << b.mu[J] << "," << b.alpha(M, J) << "," << b.beta(M, J)
                << "\n";
        }
}

NamedBundle read_bundle_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open bundle '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("site,index,mu,alpha,beta", 0) != 0)
        throw DataError("'" + path.string() + "' is not a coefficient bundle");
    std::vector<std::string> order;
    std::map<std::string, std::map<std::size_t, std::pair<double, double>>> rows;
    std::size_t p = 0, lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string site, idx, mu, alpha, beta;
        if (!std::getline(ss, site, ',') || !std::getline(ss, idx, ',') || !std::getline(ss, mu, ',') ||
            !std::getline(ss, alpha, ','))
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
        std::size_t j = 0;
        double m = 0.0, a = 0.0;
        try {
            j = std::stoul(idx);
            m = std::stod(mu);
            a = std::stod(alpha);
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number");
        }
        if (!rows.count(site)) order.push_back(site);
        rows[site][j] = {m, a};
        p = std::max(p, j + 1);
    }
    if (order.empty()) throw DataError("bundle '" + path.string() + "' is empty");
    Vector mu = Vector::Zero(static_cast<Eigen::Index>(p));
    Matrix alpha = Matrix::Zero(static_cast<Eigen::Index>(order.size()), static_cast<Eigen::Index>(p));
    for (std::size_t s = 0; s < order.size(); ++s) {
        const auto& r = rows[order[s]];
        if (r.size() != p) throw DataError("bundle '" + path.string() + "': site '" + order[s] + "' is incomplete");
        for (const auto& [j, v] : r) {
            mu[static_cast<Eigen::Index>(j)] = v.first;
            alpha(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = v.second;
        }
    }
    return {CoefficientBundle::from_parts(std::move(mu), std::move(alpha)), std::move(order)};
}

}  // namespace shir
