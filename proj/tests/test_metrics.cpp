#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>
#include <Eigen/Dense>

#include "assim/metrics.hpp"
#include "assim/resampling.hpp"

using namespace assim;

namespace {

Ensemble equal_ensemble(const std::vector<double>& xs) {
    Ensemble ens{{}, WeightVector::equal(static_cast<int>(xs.size())), 0};
    for (double x : xs) ens.particles.push_back(Eigen::VectorXd::Constant(1, x));
    return ens;
}

}  // namespace

TEST_CASE("max particle error basics") {
    Eigen::VectorXd truth = Eigen::VectorXd::Constant(1, 2.0);
    CHECK(max_particle_error(equal_ensemble({2.0, 2.0, 2.0}), truth) == 0.0);
    CHECK(max_particle_error(equal_ensemble({5.0}), truth) == 9.0);

    Ensemble a = equal_ensemble({1.0, 4.0, -2.0});
    Ensemble b = equal_ensemble({-2.0, 1.0, 4.0});
    CHECK(max_particle_error(a, truth) == max_particle_error(b, truth));
}

TEST_CASE("mean error basics") {
    Eigen::VectorXd truth = Eigen::VectorXd::Constant(1, 3.0);
    CHECK(mean_error(equal_ensemble({2.0, 4.0}), truth) == 0.0);
    CHECK(mean_error(equal_ensemble({3.0}), truth) == 0.0);

    WeightedEnsemble we;
    we.particles = {Eigen::VectorXd::Constant(1, 0.0),
                    Eigen::VectorXd::Constant(1, 4.0)};
    we.weights = normalize({0.25, 0.75});
    CHECK(mean_error(we, truth) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("estimate_d vanishes on identical replicates") {
    TestFunctionDictionary dict = TestFunctionDictionary::make(1, 16, 7);
    std::vector<Ensemble> runs;
    RngStream rng(81);
    for (int r = 0; r < 30; ++r) {
        Ensemble e{{}, WeightVector::equal(8), 0};
        for (int n = 0; n < 8; ++n) e.particles.push_back(rng.normals(1));
        runs.push_back(std::move(e));
    }
    CHECK(estimate_d(runs, runs, dict) == 0.0);
}

TEST_CASE("estimate_d on point masses is the dictionary gap") {
    TestFunctionDictionary dict = TestFunctionDictionary::make(1, 16, 7);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.3);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(1, -1.1);
    std::vector<Ensemble> a(30), b(30);
    for (int r = 0; r < 30; ++r) {
        a[r] = Ensemble{{x}, WeightVector::equal(1), 0};
        b[r] = Ensemble{{y}, WeightVector::equal(1), 0};
    }
    double gap = 0.0;
    for (int i = 0; i < dict.size(); ++i)
        gap = std::max(gap, std::abs(dict.eval(i, x) - dict.eval(i, y)));
    CHECK(estimate_d(a, b, dict) == doctest::Approx(gap).epsilon(1e-12));
}

TEST_CASE("estimate_d rejects too few replicates") {
    TestFunctionDictionary dict = TestFunctionDictionary::make(1, 4, 7);
    std::vector<Ensemble> runs(10, equal_ensemble({0.0}));
    CHECK_THROWS(estimate_d(runs, runs, dict));
}

TEST_CASE("estimate_d against a sampled gaussian obeys the N^{-1/2} bound") {
    TestFunctionDictionary dict = TestFunctionDictionary::make(1, 16, 7);
    GaussianDist nu(Eigen::VectorXd::Zero(1), SpdMatrix::identity(1));
    std::vector<double> means = gaussian_dictionary_means(dict, nu);
    const int n = 100, reps = 1000;
    std::vector<Ensemble> runs(reps);
    RngStream rng(82);
    for (int r = 0; r < reps; ++r) {
        Ensemble e{{}, WeightVector::equal(n), 0};
        for (int i = 0; i < n; ++i) e.particles.push_back(sample(nu, rng));
        runs[r] = std::move(e);
    }
    CHECK(estimate_d(runs, means, dict) <= 1.1 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("dictionary functions are bounded by one") {
    TestFunctionDictionary dict = TestFunctionDictionary::make(2, 32, 9);
    RngStream rng(83);
    for (int t = 0; t < 1000; ++t) {
        Eigen::VectorXd x = 10.0 * rng.normals(2);
        for (int i = 0; i < dict.size(); ++i)
            CHECK(std::abs(dict.eval(i, x)) <= 1.0);
    }
}

TEST_CASE("coupling discrepancy basics") {
    Ensemble a = equal_ensemble({1.0, 2.0});
    CHECK(coupling_discrepancy(a, a) == 0.0);
    Ensemble b = equal_ensemble({2.0, 1.0});
    // Same set, permuted: index matching makes this nonzero by contract.
    CHECK(coupling_discrepancy(a, b) == 1.0);
    CHECK_THROWS(coupling_discrepancy(a, equal_ensemble({1.0})));
}

TEST_CASE("coupled scalar gain chains contract by alpha per step") {
    // m' = (1-KH) sin(m) + Ky with shared y: difference contracts by
    // alpha = |1-KH| since sin is 1-Lipschitz.
    const double one_minus_kh = 0.4;
    double a = 2.5, b = -2.5;
    double disc = std::abs(a - b);
    for (int k = 0; k < 20; ++k) {
        double y = std::sin(0.37 * k);
        a = one_minus_kh * std::sin(a) + 0.6 * y;
        b = one_minus_kh * std::sin(b) + 0.6 * y;
        double next = std::abs(a - b);
        CHECK(next <= one_minus_kh * disc + 1e-14);
        disc = next;
    }
}

TEST_CASE("fit_rate recovers exact power laws") {
    std::vector<std::pair<double, double>> sq;
    for (double x : {1.0, 2.0, 5.0, 9.0}) sq.emplace_back(x, x * x);
    RateFit f1 = fit_rate(sq, true);
    CHECK(f1.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f1.r_squared == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<std::pair<double, double>> flat = {
        {1.0, 3.0}, {10.0, 3.0}, {100.0, 3.0}};
    CHECK(std::abs(fit_rate(flat, true).slope) < 1e-12);

    std::vector<std::pair<double, double>> inv_sqrt;
    for (double x : {1.0, 4.0, 16.0, 64.0})
        inv_sqrt.emplace_back(x, 1.0 / std::sqrt(x));
    CHECK(fit_rate(inv_sqrt, true).slope ==
          doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("fit_rate input validation") {
    CHECK_THROWS(fit_rate({{1.0, 1.0}, {2.0, 2.0}}, false));
    CHECK_THROWS(fit_rate({{1.0, 1.0}, {2.0, -2.0}, {3.0, 3.0}}, true));
}

TEST_CASE("gaussian dictionary means are exact for odd functions") {
    // A dictionary on a symmetric nu: the coordinate clamp has mean zero.
    TestFunctionDictionary dict = TestFunctionDictionary::make(1, 8, 11);
    GaussianDist nu(Eigen::VectorXd::Zero(1), SpdMatrix::identity(1));
    std::vector<double> means = gaussian_dictionary_means(dict, nu);
    CHECK(std::abs(means.back()) < 1e-8);  // clamp(x, -1, 1) under N(0,1)
}
