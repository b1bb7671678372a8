#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "shir/aggregator.hpp"
#include "shir/errors.hpp"
#include "shir/quadratic_lasso.hpp"

using namespace shir;

namespace {

double total_n(const std::vector<LocalSummary>& s) {
    double N = 0.0;
    for (const auto& x : s) N += static_cast<double>(x.n);
    return N;
}

double loop_objective(const std::vector<LocalSummary>& s, const Vector& mu, const Matrix& alpha,
                      const PenaltyConfig& cfg) {
    const double N = total_n(s);
    double v = 0.0;
    for (std::size_t m = 0; m < s.size(); ++m) {
        const auto p = static_cast<Eigen::Index>(s[m].p());
        double quad = 0.0, lin = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double bj = mu[j] + alpha(static_cast<Eigen::Index>(m), j);
            lin += bj * s[m].g[j];
            for (Eigen::Index k = 0; k < p; ++k)
                quad += bj * s[m].H(j, k) * (mu[k] + alpha(static_cast<Eigen::Index>(m), k));
        }
        v += static_cast<double>(s[m].n) / N * (quad - 2.0 * lin);
    }
    for (Eigen::Index j = 1; j < mu.size(); ++j) {
        double sq = 0.0;
        for (Eigen::Index m = 0; m < alpha.rows(); ++m) sq += alpha(m, j) * alpha(m, j);
        v += cfg.lambda * (std::abs(mu[j]) + cfg.lambda_g * std::sqrt(sq));
    }
    return v;
}

}  // namespace

TEST_CASE("objective matches a scalar loop") {
    std::mt19937_64 rng(20);
    const auto s = oracle::random_summaries(rng, 3, 5, LossFamily::logistic);
    Vector mu = oracle::random_matrix(rng, 5, 1).col(0);
    Matrix alpha = oracle::random_matrix(rng, 3, 5);
    alpha.rowwise() -= alpha.colwise().mean();
    const auto b = CoefficientBundle::from_parts(mu, alpha);
    const PenaltyConfig cfg{0.3, 0.7};
    CHECK(shir_objective(s, b, cfg) == doctest::Approx(loop_objective(s, mu, alpha, cfg)).epsilon(1e-12));
    CHECK(shir_objective(s, CoefficientBundle::zeros(3, 5), cfg) == 0.0);
    CHECK((b.beta.row(1).transpose() - (mu + alpha.row(1).transpose())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero linear terms give the zero bundle") {
    std::mt19937_64 rng(21);
    auto s = oracle::random_summaries(rng, 3, 4, LossFamily::squared_error);
    for (auto& x : s) x.g.setZero();
    const auto b = solve_shir(s, {0.1, 1.0});
    CHECK(b.mu.cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.alpha.cwiseAbs().maxCoeff() == 0.0);
    CHECK(kkt_residual(s, CoefficientBundle::zeros(3, 4), {5.0, 1.0}) == 0.0);
}

TEST_CASE("critical lambda") {
    std::mt19937_64 rng(22);
    for (auto fam : {LossFamily::squared_error, LossFamily::logistic}) {
        const auto s = oracle::random_summaries(rng, 3, 6, fam);
        for (double lg : {0.3, 1.0, 3.0}) {
            const double lc = lambda_critical(s, lg);
            const auto at = solve_shir(s, {lc * (1 + 1e-9), lg});
            CHECK(at.active_mu.empty());
            CHECK(at.active_alpha.empty());
            const auto null = intercept_only(s);
            CHECK((at.beta - null.beta).cwiseAbs().maxCoeff() < 1e-7);
            const auto below = solve_shir(s, {0.9 * lc, lg});
            CHECK(below.active_mu.size() + below.active_alpha.size() > 0);
        }
    }
}

TEST_CASE("identity-scaled instance matches the oracle") {
    std::vector<LocalSummary> s(2);
    const double scale[] = {1.0, 2.5};
    for (int m = 0; m < 2; ++m) {
        s[m].site_id = "s" + std::to_string(m);
        s[m].n = 50 + 30 * m;
        s[m].H = scale[m] * Matrix::Identity(3, 3);
        s[m].g = Vector(3);
    }
    s[0].g << 0.4, 0.9, -0.2;
    s[1].g << -0.1, 0.6, 0.5;
    const PenaltyConfig cfg{0.2, 0.8};
    const auto b = solve_shir(s, cfg);
    const auto o = oracle::shir_oracle(s, cfg.lambda, cfg.lambda_g);
    CHECK((b.mu - o.mu).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((b.alpha - o.alpha).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("random instances match the oracle") {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 8; ++rep) {
        const auto fam = rep % 2 ? LossFamily::logistic : LossFamily::squared_error;
        const int M = 2 + rep % 2, p = 3 + rep % 4;
        const auto s = oracle::random_summaries(rng, M, p, fam);
        const double lg = 0.5 + 0.25 * rep;
        const double lam = 0.3 * lambda_critical(s, lg);
        const auto b = solve_shir(s, {lam, lg});
        const auto o = oracle::shir_oracle(s, lam, lg);
        CHECK((b.mu - o.mu).cwiseAbs().maxCoeff() < 1e-5);
        CHECK((b.alpha - o.alpha).cwiseAbs().maxCoeff() < 1e-5);
        CHECK(shir_objective(s, b, {lam, lg}) <= shir_objective(s, CoefficientBundle::from_parts(o.mu, o.alpha), {lam, lg}) + 1e-10);
    }
}

TEST_CASE("zero penalty is the per-site closed form") {
    std::mt19937_64 rng(24);
    const auto s = oracle::random_summaries(rng, 3, 5, LossFamily::logistic);
    const auto b = solve_shir(s, {0.0, 1.0});
    for (std::size_t m = 0; m < 3; ++m) {
        const Vector direct = s[m].H.ldlt().solve(s[m].g);
        CHECK((b.beta.row(static_cast<Eigen::Index>(m)).transpose() - direct).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("zero penalty with a singular site Hessian") {
    std::mt19937_64 rng(25);
    auto s = oracle::random_summaries(rng, 2, 4, LossFamily::squared_error);
    s[1].H.row(3).setZero();
    s[1].H.col(3).setZero();
    CHECK_THROWS_AS(solve_shir(s, {0.0, 1.0}), SingularityError);
}

TEST_CASE("kkt residual certifies solutions and flags perturbations") {
    std::mt19937_64 rng(26);
    const auto s = oracle::random_summaries(rng, 3, 6, LossFamily::logistic);
    const PenaltyConfig cfg{0.2 * lambda_critical(s, 1.0), 1.0};
    ShirDiagnostics diag;
    const auto b = solve_shir(s, cfg, {}, nullptr, &diag);
    CHECK(kkt_residual(s, b, cfg) <= 1e-7);
    CHECK(diag.kkt <= 1e-8);
    REQUIRE(!b.active_mu.empty());
    Vector mu = b.mu;
    mu[static_cast<Eigen::Index>(b.active_mu.front())] += 1e-3;
    const auto moved = CoefficientBundle::from_parts(mu, b.alpha);
    CHECK(kkt_residual(s, moved, cfg) >= 1e-4);

    CHECK(kkt_residual(s, intercept_only(s), {1e6, 1.0}) < 1e-8);
}

TEST_CASE("sweeps decrease the objective and keep the constraint") {
    std::mt19937_64 rng(27);
    const auto s = oracle::random_summaries(rng, 3, 8, LossFamily::logistic);
    const PenaltyConfig cfg{0.1 * lambda_critical(s, 0.5), 0.5};
    ShirDiagnostics diag;
    const auto b = solve_shir(s, cfg, {}, nullptr, &diag);
    for (std::size_t k = 1; k < diag.objective_trace.size(); ++k)
        CHECK(diag.objective_trace[k] <= diag.objective_trace[k - 1] + 1e-14 * std::abs(diag.objective_trace[k - 1]));
    CHECK(diag.max_constraint_violation < 1e-12);
    CHECK(b.alpha.colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("site order only permutes alpha") {
    std::mt19937_64 rng(28);
    for (int rep = 0; rep < 4; ++rep) {
        const auto s = oracle::random_summaries(rng, 4, 6, LossFamily::logistic);
        const PenaltyConfig cfg{0.15 * lambda_critical(s, 0.5), 0.5};
        const auto a = solve_shir(s, cfg);
        std::vector<std::size_t> perm(4);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<LocalSummary> t;
        for (auto k : perm) t.push_back(s[k]);
        const auto b = solve_shir(t, cfg);
        CHECK(a.mu == b.mu);
        for (std::size_t m = 0; m < 4; ++m)
            CHECK(b.alpha.row(static_cast<Eigen::Index>(m)) == a.alpha.row(static_cast<Eigen::Index>(perm[m])));
        CHECK(shir_objective(s, a, cfg) == doctest::Approx(shir_objective(t, b, cfg)).epsilon(1e-13));
    }
}

TEST_CASE("large lambda_g pools the slopes") {
    std::mt19937_64 rng(29);
    const auto s = oracle::random_summaries(rng, 3, 5, LossFamily::squared_error);
    const double lam = 0.2 * lambda_critical(s, 1.0);
    const auto b = solve_shir(s, {lam, 1e6});
    CHECK(b.active_alpha.empty());

    // Same problem with alpha frozen at zero beyond the intercepts, written as
    // one quadratic lasso over (site intercepts, shared slopes).
    const Eigen::Index M = 3, p = 5, d = M + p - 1;
    const double N = total_n(s);
    Matrix A = Matrix::Zero(d, d);
    Vector c = Vector::Zero(d);
    for (Eigen::Index m = 0; m < M; ++m) {
        Matrix E = Matrix::Zero(p, d);
        E(0, m) = 1.0;
        for (Eigen::Index j = 1; j < p; ++j) E(j, M + j - 1) = 1.0;
        const double w = static_cast<double>(s[static_cast<std::size_t>(m)].n) / N;
        A += 2.0 * w * E.transpose() * s[static_cast<std::size_t>(m)].H * E;
        c += 2.0 * w * E.transpose() * s[static_cast<std::size_t>(m)].g;
    }
    Vector pen = Vector::Constant(d, lam);
    pen.head(M).setZero();
    Vector theta = Vector::Zero(d);
    solve_quadratic_lasso(A, c, pen, theta, {1e-13, 100000});
    CHECK((b.mu.tail(p - 1) - theta.tail(p - 1)).cwiseAbs().maxCoeff() < 1e-7);
    for (Eigen::Index m = 0; m < M; ++m) CHECK(b.beta(m, 0) == doctest::Approx(theta[m]).epsilon(1e-7));
}

TEST_CASE("iteration cap raises a convergence error") {
    std::mt19937_64 rng(30);
    const auto s = oracle::random_summaries(rng, 3, 8, LossFamily::logistic);
    ShirOptions opts;
    opts.max_sweeps = 1;
    CHECK_THROWS_AS(solve_shir(s, {0.05 * lambda_critical(s, 1.0), 1.0}, opts), ConvergenceError);
}

TEST_CASE("contract checks") {
    std::mt19937_64 rng(31);
    auto s = oracle::random_summaries(rng, 2, 4, LossFamily::logistic);
    CHECK_THROWS_AS(solve_shir(s, {-1.0, 1.0}), ContractViolation);
    auto t = s;
    t.push_back(oracle::random_summaries(rng, 1, 5, LossFamily::logistic).front());
    CHECK_THROWS_AS(solve_shir(t, {0.1, 1.0}), ContractViolation);
    CHECK_THROWS_AS(solve_shir(std::vector<LocalSummary>{}, {0.1, 1.0}), ContractViolation);
}
