#include <cmath>

#include <doctest.h>
#include <Eigen/Dense>

#include "assim/gaussian.hpp"
#include "assim/rng.hpp"

using namespace assim;

namespace {

Eigen::MatrixXd random_spd(Eigen::Index d, RngStream& rng) {
    Eigen::MatrixXd m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
    return m * m.transpose() + Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

TEST_CASE("weighted norm with identity weighting") {
    SpdMatrix a(Eigen::MatrixXd::Identity(2, 2));
    Eigen::VectorXd x(2);
    x << 3, 4;
    CHECK(weighted_norm_sq(a, x) == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("weighted norm scalar case") {
    SpdMatrix a(Eigen::MatrixXd::Constant(1, 1, 4.0));
    Eigen::VectorXd x(1);
    x << 2;
    CHECK(weighted_norm_sq(a, x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("weighted norm agrees with explicit inverse") {
    RngStream rng(31);
    for (int t = 0; t < 20; ++t) {
        Eigen::MatrixXd m = random_spd(3, rng);
        SpdMatrix a(m);
        Eigen::VectorXd x = rng.normals(3);
        double oracle = x.dot(m.inverse() * x);
        CHECK(weighted_norm_sq(a, x) == doctest::Approx(oracle).epsilon(1e-10));
    }
}

TEST_CASE("weighted norm scaling in the covariance") {
    RngStream rng(32);
    Eigen::MatrixXd m = random_spd(4, rng);
    Eigen::VectorXd x = rng.normals(4);
    double base = weighted_norm_sq(SpdMatrix(m), x);
    double scaled = weighted_norm_sq(SpdMatrix(2.5 * m), x);
    CHECK(scaled == doctest::Approx(base / 2.5).epsilon(1e-10));
}

TEST_CASE("weighted norm is positive definite") {
    RngStream rng(33);
    SpdMatrix a(random_spd(3, rng));
    CHECK(weighted_norm_sq(a, Eigen::VectorXd::Zero(3)) == 0.0);
    Eigen::VectorXd x = rng.normals(3);
    CHECK(weighted_norm_sq(a, x) > 0.0);
}

TEST_CASE("cholesky factor reconstructs the matrix") {
    RngStream rng(34);
    Eigen::MatrixXd m = random_spd(5, rng);
    SpdMatrix a(m);
    CHECK(((a.chol() * a.chol().transpose()) - a.entries()).norm() <
          1e-10 * a.entries().norm());
}

TEST_CASE("asymmetric and indefinite inputs are rejected") {
    Eigen::MatrixXd bad(2, 2);
    bad << 1, 0.5, -0.5, 1;  // strongly asymmetric
    CHECK_THROWS(SpdMatrix{bad});
    Eigen::MatrixXd indef(2, 2);
    indef << 1, 0, 0, -1;
    CHECK_THROWS(SpdMatrix{indef});
}

TEST_CASE("gaussian sampling moments under CLT bound") {
    GaussianDist dist(Eigen::VectorXd::Zero(2), SpdMatrix::identity(2));
    RngStream rng(35);
    const int n = 100000;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < n; ++i) mean += sample(dist, rng);
    mean /= n;
    for (int j = 0; j < 2; ++j)
        CHECK(std::abs(mean[j]) < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("near-degenerate covariance collapses to the mean") {
    Eigen::VectorXd mu(2);
    mu << 1.0, -2.0;
    GaussianDist dist(mu, SpdMatrix(1e-20 * Eigen::MatrixXd::Identity(2, 2)));
    RngStream rng(36);
    Eigen::VectorXd x = sample(dist, rng);
    CHECK((x - mu).norm() < 1e-9);
}

TEST_CASE("sampling is deterministic under a cloned stream") {
    GaussianDist dist(Eigen::VectorXd::Zero(3), SpdMatrix::identity(3));
    RngStream a(37), b(37);
    CHECK(sample(dist, a) == sample(dist, b));
}

TEST_CASE("log unnormalized density") {
    GaussianDist d1(Eigen::VectorXd::Zero(1), SpdMatrix::identity(1));
    CHECK(log_unnorm_density(d1, Eigen::VectorXd::Zero(1)) == 0.0);
    Eigen::VectorXd x(1);
    x << 2;
    CHECK(log_unnorm_density(d1, x) == doctest::Approx(-2.0).epsilon(1e-12));

    RngStream rng(38);
    Eigen::MatrixXd m = random_spd(3, rng);
    GaussianDist d3(rng.normals(3), SpdMatrix(m));
    Eigen::VectorXd y = rng.normals(3);
    Eigen::VectorXd half = SpdMatrix(m).half_solve(y - d3.mean);
    CHECK(log_unnorm_density(d3, y) ==
          doctest::Approx(-0.5 * half.squaredNorm()).epsilon(1e-10));
}

TEST_CASE("normalized log density integrates the constant") {
    // Scalar standard normal at 0: log(1/sqrt(2 pi)).
    GaussianDist d1(Eigen::VectorXd::Zero(1), SpdMatrix::identity(1));
    CHECK(log_density(d1, Eigen::VectorXd::Zero(1)) ==
          doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
    CHECK(gaussian_log_density(SpdMatrix::identity(1), Eigen::VectorXd::Zero(1)) ==
          doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
}
