#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "shir/errors.hpp"
#include "shir/local_lasso.hpp"
#include "shir/quadratic_lasso.hpp"

using namespace shir;

TEST_CASE("zero penalty gives least squares") {
    std::mt19937_64 rng(10);
    const auto d = oracle::random_study(rng, 200, 6, LossFamily::squared_error);
    const Vector ols = (d.X().transpose() * d.X()).ldlt().solve(d.X().transpose() * d.y());
    const Vector b = fit_local_lasso(d, LossFamily::squared_error, 0.0);
    CHECK((b - ols).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("lambda max zeroes every penalized coefficient") {
    std::mt19937_64 rng(11);
    for (auto fam : {LossFamily::squared_error, LossFamily::logistic}) {
        const auto d = oracle::random_study(rng, 120, 7, fam);
        const Vector w = penalty_weights(d, true);
        const Vector r = d.y().array() - d.y().mean();
        if (fam == LossFamily::squared_error) {
            // 2 n^-1 |X_j' (y - ybar)| / sd_j, written out
            double top = 0.0;
            for (Eigen::Index j = 1; j < 7; ++j)
                top = std::max(top, 2.0 * std::abs(d.X().col(j).dot(r)) / 120.0 / w[j]);
            CHECK(lambda_max(d, fam, w) == doctest::Approx(top).epsilon(1e-12));
        }
        const double lm = lambda_max(d, fam, w);
        const Vector at = fit_local_lasso(d, fam, lm);
        CHECK(at.tail(6).cwiseAbs().maxCoeff() == 0.0);
        CHECK((at - null_fit(d, fam)).cwiseAbs().maxCoeff() < 1e-8);
        const Vector below = fit_local_lasso(d, fam, 0.95 * lm);
        CHECK(below.tail(6).cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("local lasso matches a slow proximal oracle") {
    std::mt19937_64 rng(12);
    for (auto fam : {LossFamily::squared_error, LossFamily::logistic}) {
        for (int rep = 0; rep < 3; ++rep) {
            const auto d = oracle::random_study(rng, 50, 4, fam);
            const Vector w = penalty_weights(d, true);
            const double lam = 0.2 * lambda_max(d, fam, w);
            const Vector fast = fit_local_lasso(d, fam, lam);
            const Vector slow = oracle::lasso_oracle(d, fam, lam, w);
            CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-5);
            CHECK(lasso_objective(d, fam, lam, w, fast) <= lasso_objective(d, fam, lam, w, slow) + 1e-9);
            CHECK(lasso_kkt(d, fam, lam, w, fast) <= 1e-7);
        }
    }
}

TEST_CASE("sweep and outer objectives never increase") {
    std::mt19937_64 rng(13);
    const auto d = oracle::random_study(rng, 150, 12, LossFamily::logistic);
    const double lam = 0.05 * lambda_max(d, LossFamily::logistic, penalty_weights(d, true));
    LassoDiagnostics diag;
    fit_local_lasso(d, LossFamily::logistic, lam, {}, nullptr, &diag);
    for (const auto& sweeps : diag.sweep_objectives)
        for (std::size_t k = 1; k < sweeps.size(); ++k) CHECK(sweeps[k] <= sweeps[k - 1] + 1e-12 * std::abs(sweeps[k - 1]));
    for (std::size_t k = 1; k < diag.outer_objectives.size(); ++k)
        CHECK(diag.outer_objectives[k] <= diag.outer_objectives[k - 1] + 1e-12);
    CHECK(diag.kkt <= 1e-7);
}

TEST_CASE("warm and cold starts reach the same point") {
    std::mt19937_64 rng(14);
    const auto d = oracle::random_study(rng, 100, 9, LossFamily::logistic);
    const double lm = lambda_max(d, LossFamily::logistic, penalty_weights(d, true));
    Vector warm = null_fit(d, LossFamily::logistic);
    for (double lam : log_grid(lm, 20, 0.02)) {
        warm = fit_local_lasso(d, LossFamily::logistic, lam, {}, &warm);
        const Vector cold = fit_local_lasso(d, LossFamily::logistic, lam);
        CHECK((warm - cold).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("grid helpers") {
    const auto g = log_grid(2.0, 5, 1e-2);
    REQUIRE(g.size() == 5);
    CHECK(g.front() == 2.0);
    CHECK(g.back() == doctest::Approx(0.02).epsilon(1e-12));
    for (std::size_t k = 1; k < g.size(); ++k) CHECK(g[k] / g[k - 1] == doctest::Approx(g[1] / g[0]));
}

TEST_CASE("cross validation") {
    std::mt19937_64 rng(15);
    const auto d = oracle::random_study(rng, 60, 4, LossFamily::squared_error);
    const double one[] = {0.05};
    const auto single = cross_validate_lambda(d, LossFamily::squared_error, 5, one, 1);
    CHECK(single.lambda_m == 0.05);
    CHECK(single.cv_curve.size() == 1);

    SUBCASE("leave-one-out against an exhaustive loop") {
        const auto tiny = oracle::random_study(rng, 12, 3, LossFamily::squared_error);
        const double lm = lambda_max(tiny, LossFamily::squared_error, penalty_weights(tiny, true));
        const auto grid = log_grid(lm, 6, 0.01);
        const auto fit = cross_validate_lambda(tiny, LossFamily::squared_error, 12, grid, 3);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            double total = 0.0;
            for (std::size_t i = 0; i < 12; ++i) {
                std::vector<std::size_t> train;
                for (std::size_t k = 0; k < 12; ++k)
                    if (k != i) train.push_back(k);
                const auto tr = tiny.subset(train);
                const Vector b = oracle::lasso_oracle(tr, LossFamily::squared_error, grid[g], penalty_weights(tr, true));
                const auto row = static_cast<Eigen::Index>(i);
                const double r = tiny.y()[row] - tiny.X().row(row).dot(b);
                total += r * r;
            }
            CHECK(fit.cv_curve[g].mean_loss == doctest::Approx(total / 12.0).epsilon(1e-6));
        }
    }

    CHECK_THROWS_AS(cross_validate_lambda(d, LossFamily::squared_error, 1, one, 1), ContractViolation);
    const double up[] = {0.1, 0.2};
    CHECK_THROWS_AS(cross_validate_lambda(d, LossFamily::squared_error, 5, up, 1), ContractViolation);
}

TEST_CASE("single-class folds are rejected") {
    Matrix X(20, 2);
    X.col(0).setOnes();
    for (int i = 0; i < 20; ++i) X(i, 1) = i;
    Vector y = Vector::Zero(20);
    y[3] = 1.0;
    StudyData d(X, y, "rare");
    const double one[] = {0.01};
    CHECK_THROWS_WITH_AS(cross_validate_lambda(d, LossFamily::logistic, 2, one, 1), doctest::Contains("rare"),
                         DataError);
}

TEST_CASE("pure noise selects few false positives") {
    std::vector<int> fp;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed + 100);
        auto d = oracle::random_study(rng, 100, 11, LossFamily::squared_error, "noise", 0.0);
        const auto fit = fit_site(d, LossFamily::squared_error, 10, seed);
        int count = 0;
        for (Eigen::Index j = 1; j < 11; ++j) count += fit.beta[j] != 0.0;
        fp.push_back(count);
    }
    std::nth_element(fp.begin(), fp.begin() + 25, fp.end());
    CHECK(fp[25] <= 2);
}

TEST_CASE("quadratic coordinate descent") {
    CHECK(soft_threshold(3.0, 1.0) == 2.0);
    CHECK(soft_threshold(-3.0, 1.0) == -2.0);
    CHECK(soft_threshold(0.5, 1.0) == 0.0);
    Matrix A(2, 2);
    A << 2, 0.5, 0.5, 1;
    Vector c(2);
    c << 1, -2;
    Vector pen = Vector::Zero(2);
    Vector b = Vector::Zero(2);
    const auto res = solve_quadratic_lasso(A, c, pen, b);
    CHECK(res.converged);
    CHECK((b - A.ldlt().solve(c)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(lasso_kkt_residual(A * b - c, b, pen) < 1e-8);
}
