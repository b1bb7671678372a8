#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "shir/errors.hpp"
#include "shir/sim.hpp"

namespace shir {

std::string_view to_string(Mechanism m) noexcept {
    switch (m) {
        case Mechanism::strong: return "i";
        case Mechanism::weak: return "ii";
        case Mechanism::misspecified: return "iii";
    }
    return "i";
}

std::optional<Mechanism> parse_mechanism(std::string_view s) noexcept {
    if (s == "i" || s == "1" || s == "strong") return Mechanism::strong;
    if (s == "ii" || s == "2" || s == "weak") return Mechanism::weak;
    if (s == "iii" || s == "3" || s == "misspecified") return Mechanism::misspecified;
    return std::nullopt;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(base) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

double site_correlation(std::size_t m, std::size_t M) {
    if (m < 1 || m > M) throw ContractViolation("site index out of range");
    return 0.4 * static_cast<double>(m - 1) / static_cast<double>(M) + 0.15;
}

Matrix ar1_matrix(std::size_t q, double r) {
    const auto Q = static_cast<Eigen::Index>(q);
    Matrix R(Q, Q);
    for (Eigen::Index i = 0; i < Q; ++i)
        for (Eigen::Index j = 0; j < Q; ++j) R(i, j) = std::pow(r, static_cast<double>(std::abs(i - j)));
    return R;
}

Matrix loading_matrix(std::size_t q1, std::size_t q2, double r, std::size_t s1, std::mt19937_64& rng) {
    if (s1 > q1) throw ContractViolation("more loadings per column than rows");
    Matrix G = Matrix::Zero(static_cast<Eigen::Index>(q1), static_cast<Eigen::Index>(q2));
    std::vector<std::size_t> rows(q1);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t c = 0; c < q2; ++c) {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t k = 0; k < s1; ++k)
            G(static_cast<Eigen::Index>(rows[k]), static_cast<Eigen::Index>(c)) = coin(rng) ? r : -r;
    }
    return G;
}

namespace {

// [[I + G'RG, G'R], [RG, R]] placed at `core` (the signal block) and `tail`.
void place_factor_block(Matrix& C, Eigen::Index core_at, Eigen::Index core, Eigen::Index tail_at,
                        const Matrix& R, const Matrix& G) {
    const Eigen::Index tail = R.rows();
    const Matrix RG = R * G;
    const Matrix K = Matrix::Identity(core, core) + G.transpose() * RG;
    C.block(core_at, core_at, core, core) = K.selfadjointView<Eigen::Lower>();
    C.block(tail_at, tail_at, tail, tail) = R;
    C.block(tail_at, core_at, tail, core) = RG;
    C.block(core_at, tail_at, core, tail) = RG.transpose();
}

Matrix repair(const Matrix& C) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    Vector ev = es.eigenvalues().cwiseMax(1e-8);
    std::cerr << "warning: covariance not positive definite (min eigenvalue "
              << es.eigenvalues().minCoeff() << "), flooring at 1e-8\n";
    Matrix out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return (out + out.transpose()) * 0.5;
}

}  // namespace

Matrix gen_covariance(Mechanism mech, std::size_t m, std::size_t M, std::size_t p, std::uint64_t seed) {
    const double r = site_correlation(m, M);
    std::mt19937_64 rng(seed);
    const auto P = static_cast<Eigen::Index>(p);
    Matrix C = Matrix::Zero(P, P);
    if (mech == Mechanism::misspecified) {
        if (p < 51) throw ContractViolation("the misspecified mechanism needs p >= 51");
        const Matrix G = loading_matrix(45, 5, r, 45, rng);
        place_factor_block(C, 0, 5, 5, ar1_matrix(45, r), G);
        if (p > 50) C.block(50, 50, P - 50, P - 50) = ar1_matrix(p - 50, r);
    } else {
        if (p < 9) throw ContractViolation("this mechanism needs p >= 9");
        const Matrix G = loading_matrix(p - 8, 8, r, std::min<std::size_t>(15, p - 8), rng);
        place_factor_block(C, 0, 8, 8, ar1_matrix(p - 8, r), G);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success) return repair(C);
    return C;
}

std::optional<Vector> true_beta(const SimSetting& s, std::size_t m) {
    if (s.mechanism == Mechanism::misspecified) return std::nullopt;
    const bool strong = s.mechanism == Mechanism::strong;
    const double a_mu = (strong ? 0.5 : 0.2) * s.signal_scale;
    const double a_al = (strong ? 0.35 : 0.15) * s.signal_scale * (m % 2 == 0 ? 1.0 : -1.0);
    Vector beta = Vector::Zero(static_cast<Eigen::Index>(s.p + 1));
    const double mu[6] = {1, -1, 1, -1, 1, -1};
    const double al[6] = {1, 1, 1, -1, -1, -1};
    for (int k = 0; k < 6; ++k) {
        beta[1 + k] += a_mu * mu[k];  // covariates 1..6
        beta[3 + k] += a_al * al[k];  // covariates 3..8
    }
    return beta;
}

SimStudy gen_study(const SimSetting& s, std::size_t m, std::uint64_t seed) {
    if (s.n < 2) throw ContractViolation("need n >= 2");
    const Matrix C = gen_covariance(s.mechanism, m, s.M, s.p, derive_seed(seed, 1));
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    const Matrix L = llt.matrixL();

    std::mt19937_64 rng(derive_seed(seed, 2));
    std::normal_distribution<double> normal;
    const auto n = static_cast<Eigen::Index>(s.n);
    const auto P = static_cast<Eigen::Index>(s.p);
    Matrix Z(n, P);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < P; ++j) Z(i, j) = normal(rng);
    Matrix X(n, P + 1);
    X.col(0).setOnes();
    X.rightCols(P) = Z * L.transpose();

    Vector eta(n);
    if (const auto beta = true_beta(s, m)) {
        eta = X * *beta;
    } else {
        const double a = (0.25 + 0.15 * (m % 2 == 0 ? 1.0 : -1.0)) * s.signal_scale;
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = 0.0;
            for (Eigen::Index j = 1; j <= 5; ++j) {
                const double x = X(i, j);
                v += a * (x + 0.2 * x * x * x);
            }
            for (Eigen::Index j = 1; j <= 4; ++j) v += 0.1 * s.signal_scale * X(i, j) * X(i, j + 1);
            eta[i] = v;
        }
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = unif(rng) < sigmoid(eta[i]) ? 1.0 : 0.0;
    return {StudyData(std::move(X), std::move(y), "site" + std::to_string(m)), std::move(eta)};
}

}  // namespace shir
