#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "shir/errors.hpp"
#include "shir/glm.hpp"
#include "shir/local_lasso.hpp"

using namespace shir;

namespace {

double loop_loss(const StudyData& d, const Vector& b, LossFamily fam) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < d.X().rows(); ++i) {
        double eta = 0.0;
        for (Eigen::Index j = 0; j < d.X().cols(); ++j) eta += d.X()(i, j) * b[j];
        const double y = d.y()[i];
        total += fam == LossFamily::squared_error ? (y - eta) * (y - eta) : -y * eta + std::log(1.0 + std::exp(eta));
    }
    return total / static_cast<double>(d.X().rows());
}

}  // namespace

TEST_CASE("empirical loss at zero") {
    std::mt19937_64 rng(1);
    const auto d = oracle::random_study(rng, 30, 4, LossFamily::logistic);
    CHECK(empirical_loss(d, Vector::Zero(4), LossFamily::logistic) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    Matrix X(5, 2);
    X.col(0).setOnes();
    X.col(1) << 1, 2, 3, 4, 5;
    StudyData ones(X, Vector::Ones(5));
    CHECK(empirical_loss(ones, Vector::Zero(2), LossFamily::squared_error) == 1.0);
}

TEST_CASE("empirical loss matches a scalar loop") {
    std::mt19937_64 rng(2);
    for (auto fam : {LossFamily::squared_error, LossFamily::logistic}) {
        const auto d = oracle::random_study(rng, 5, 3, fam);
        Vector b(3);
        b << 0.3, -0.7, 1.1;
        CHECK(empirical_loss(d, b, fam) == doctest::Approx(loop_loss(d, b, fam)).epsilon(1e-13));
    }
}

TEST_CASE("gradient closed forms at zero") {
    std::mt19937_64 rng(3);
    const auto d = oracle::random_study(rng, 40, 5, LossFamily::logistic);
    const Vector expect = d.X().transpose() * (0.5 * Vector::Ones(40) - d.y()) / 40.0;
    CHECK((gradient(d, Vector::Zero(5), LossFamily::logistic) - expect).cwiseAbs().maxCoeff() < 1e-14);

    const auto s = oracle::random_study(rng, 40, 5, LossFamily::squared_error);
    const Vector expect2 = -2.0 * s.X().transpose() * s.y() / 40.0;
    CHECK((gradient(s, Vector::Zero(5), LossFamily::squared_error) - expect2).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("gradient and hessian match finite differences") {
    std::mt19937_64 rng(4);
    for (auto fam : {LossFamily::squared_error, LossFamily::logistic}) {
        const auto d = oracle::random_study(rng, 60, 6, fam);
        Vector b = 0.4 * oracle::random_matrix(rng, 6, 1).col(0);
        const Vector g = gradient(d, b, fam);
        const Matrix H = hessian(d, b, fam);
        for (Eigen::Index j = 0; j < 6; ++j) {
            const double h = 1e-6 * (1.0 + std::abs(b[j]));
            Vector bp = b, bm = b;
            bp[j] += h;
            bm[j] -= h;
            const double fd = (empirical_loss(d, bp, fam) - empirical_loss(d, bm, fam)) / (2 * h);
            CHECK(fd == doctest::Approx(g[j]).epsilon(1e-6));
            const Vector gd = (gradient(d, bp, fam) - gradient(d, bm, fam)) / (2 * h);
            CHECK((gd - H.col(j)).cwiseAbs().maxCoeff() < 1e-5);
        }
        CHECK(H == H.transpose());
    }
}

TEST_CASE("hessian closed forms") {
    std::mt19937_64 rng(5);
    const auto d = oracle::random_study(rng, 50, 4, LossFamily::logistic);
    const Matrix G = d.X().transpose() * d.X() / 50.0;
    CHECK((hessian(d, Vector::Zero(4), LossFamily::logistic) - 0.25 * G).cwiseAbs().maxCoeff() < 1e-13);
    Vector b(4);
    b << 1, 2, 3, 4;
    CHECK((hessian(d, b, LossFamily::squared_error) - 2.0 * G).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("study data contracts") {
    Matrix X(3, 2);
    X << 1, 0.5, 1, 0.1, 1, 0.2;
    CHECK_THROWS_AS(StudyData(X, Vector::Zero(2)), ContractViolation);
    Matrix bad = X;
    bad(1, 0) = 2.0;
    CHECK_THROWS_AS(StudyData(bad, Vector::Zero(3)), DataError);
    Vector y(3);
    y << 0, 1, std::nan("");
    CHECK_THROWS_AS(StudyData(X, y), DataError);
    StudyData ok(X, Vector::Zero(3));
    CHECK_THROWS_AS(empirical_loss(ok, Vector::Zero(3), LossFamily::logistic), ContractViolation);
    Vector y2(3);
    y2 << 0, 2, 1;
    CHECK_THROWS_AS(validate_response(StudyData(X, y2), LossFamily::logistic), DataError);
}

TEST_CASE("overflow names the observation") {
    Matrix X(3, 2);
    X << 1, 0.0, 1, 1e200, 1, 0.0;
    StudyData d(X, Vector::Ones(3));
    Vector b(2);
    b << 0.0, 1e200;
    try {
        empirical_loss(d, b, LossFamily::squared_error);
        FAIL("expected overflow");
    } catch (const OverflowError& e) {
        CHECK(e.index() == 1);
    }
}

TEST_CASE("summaries at zero and by an independent path") {
    std::mt19937_64 rng(6);
    const auto d = oracle::random_study(rng, 45, 5, LossFamily::squared_error, "a");
    LocalFit zero{Vector::Zero(5), 0.1, {}};
    const auto s = summarize(d, zero, LossFamily::squared_error);
    CHECK((s.g - 2.0 * d.X().transpose() * d.y() / 45.0).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((s.H - 2.0 * d.X().transpose() * d.X() / 45.0).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(s.lambda_m == 0.1);
    CHECK(s.n == 45);

    const auto l = oracle::random_study(rng, 45, 5, LossFamily::logistic, "b");
    const auto sl = summarize(l, LocalFit{Vector::Zero(5), 0.0, {}}, LossFamily::logistic);
    CHECK((sl.g + l.X().transpose() * (0.5 * Vector::Ones(45) - l.y()) / 45.0).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((sl.H - 0.25 * l.X().transpose() * l.X() / 45.0).cwiseAbs().maxCoeff() < 1e-14);

    Vector b = 0.3 * oracle::random_matrix(rng, 5, 1).col(0);
    const auto fast = summarize(l, LocalFit{b, 0.0, {}}, LossFamily::logistic);
    const auto slow = oracle::loop_summary(l, b, LossFamily::logistic);
    CHECK((fast.g - slow.g).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fast.H - slow.H).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(summarize(l, LocalFit{b, 0.0, {}}, LossFamily::logistic) == fast);
}
