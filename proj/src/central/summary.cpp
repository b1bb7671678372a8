#include "shir/summary.hpp"

#include <cmath>
#include <string>

#include "shir/errors.hpp"

namespace shir {

std::string_view to_string(LossFamily f) noexcept {
    return f == LossFamily::squared_error ? "squared-error" : "logistic";
}

std::optional<LossFamily> parse_family(std::string_view s) noexcept {
    if (s == "logistic" || s == "binomial") return LossFamily::logistic;
    if (s == "squared-error" || s == "linear" || s == "gaussian") return LossFamily::squared_error;
    return std::nullopt;
}

bool operator==(const LocalSummary& a, const LocalSummary& b) noexcept {
    return a.site_id == b.site_id && a.n == b.n && a.family == b.family &&
           a.lambda_m == b.lambda_m && a.schema_version == b.schema_version &&
           a.H.rows() == b.H.rows() && a.H.cols() == b.H.cols() && a.g.size() == b.g.size() &&
           a.H == b.H && a.g == b.g;
}

void validate(const LocalSummary& s) {
    const auto tag = "site '" + s.site_id + "'";
    const auto p = static_cast<Eigen::Index>(s.p());
    if (p < 2) throw DataError(tag + ": summary needs p >= 2");
    if (s.H.rows() != p || s.H.cols() != p)
        throw DataError(tag + ": H is " + std::to_string(s.H.rows()) + "x" +
                        std::to_string(s.H.cols()) + ", expected " + std::to_string(p) + "x" +
                        std::to_string(p));
    if (s.n == 0) throw DataError(tag + ": zero observation count");
    if (!s.g.allFinite() || !s.H.allFinite() || !std::isfinite(s.lambda_m))
        throw DataError(tag + ": non-finite entries in summary");
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index k = j + 1; k < p; ++k)
            if (s.H(j, k) != s.H(k, j)) throw DataError(tag + ": H is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.H, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues()[0] < -1e-10 * top)
        throw DataError(tag + ": H is not positive semidefinite (min eigenvalue " +
                        std::to_string(es.eigenvalues()[0]) + ")");
}

void check_compatible(const std::vector<LocalSummary>& summaries) {
    if (summaries.empty()) throw ContractViolation("no summaries supplied");
    const auto& first = summaries.front();
    for (const auto& s : summaries) {
        if (s.p() != first.p())
            throw DataError("site '" + s.site_id + "' has p = " + std::to_string(s.p()) +
                            " but site '" + first.site_id + "' has p = " +
                            std::to_string(first.p()));
        if (s.family != first.family)
            throw DataError("site '" + s.site_id + "' uses family " +
                            std::string(to_string(s.family)) + " but site '" + first.site_id +
                            "' uses " + std::string(to_string(first.family)));
    }
}

}  // namespace shir
