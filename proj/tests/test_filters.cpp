#include <cmath>
#include <vector>

#include <doctest.h>
#include <Eigen/Dense>

#include "assim/filters.hpp"
#include "assim/metrics.hpp"

using namespace assim;

namespace {

ModelSpec scalar_sine_model(double sigma = 0.5, double gamma = 1.0) {
    return ModelSpec(BoundedSineMap{1.0, Eigen::MatrixXd::Identity(1, 1)},
                     Eigen::MatrixXd::Identity(1, 1), SpdMatrix::identity(1),
                     SpdMatrix::identity(1), sigma, gamma);
}

ModelSpec scalar_linear_model() {
    Eigen::MatrixXd a(1, 1);
    a << 0.9;
    return ModelSpec(LinearMap{a, 0.9}, Eigen::MatrixXd::Identity(1, 1),
                     SpdMatrix::identity(1), SpdMatrix::identity(1), 1.0, 1.0);
}

TruthRun make_scalar_truth(const ModelSpec& model, int steps, std::uint64_t seed) {
    RngStream rng(seed);
    return simulate_truth(model, steps, Eigen::VectorXd::Zero(1),
                          model.Sigma0(), model.Gamma0(), rng);
}

Ensemble equal_ensemble(const std::vector<double>& xs) {
    Ensemble ens{{}, WeightVector::equal(static_cast<int>(xs.size())), 0};
    for (double x : xs) ens.particles.push_back(Eigen::VectorXd::Constant(1, x));
    return ens;
}

}  // namespace

TEST_CASE("single-particle BPF weight is one") {
    ModelSpec model = scalar_sine_model();
    GaussianStructures g = compute_structures(model);
    Ensemble ens = equal_ensemble({0.2});
    StepDraws draws = make_step_draws(123, 1, 1, 1);
    StepResult r = bpf_step(model, g, ens, Eigen::VectorXd::Constant(1, 5.0), draws);
    CHECK(r.weighted.weights.norm[0] == 1.0);
    double expected =
        model.apply_psi(ens.particles[0])[0] +
        model.Sigma().chol()(0, 0) * draws.gaussians[0][0];
    CHECK(r.weighted.particles[0][0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("likelihood peak concentrates BPF weight at tiny gamma") {
    ModelSpec model = scalar_sine_model(1e-6, 1e-3);
    GaussianStructures g = compute_structures(model);
    Ensemble ens = equal_ensemble({-1.0, 0.3, 1.2});
    StepDraws draws = make_step_draws(77, 1, 3, 1);
    // Observe exactly where particle 1 lands.
    Eigen::VectorXd yhat =
        model.apply_psi(ens.particles[1]) +
        model.Sigma().chol() * draws.gaussians[1];
    StepResult r = bpf_step(model, g, ens, yhat, draws);
    CHECK(r.weighted.weights.norm[1] > 0.999);
}

TEST_CASE("OPF without observations reduces to pure forecast") {
    ModelSpec model(BoundedSineMap{1.0, Eigen::MatrixXd::Identity(1, 1)},
                    Eigen::MatrixXd::Zero(1, 1), SpdMatrix::identity(1),
                    SpdMatrix::identity(1), 0.5, 1.0);
    GaussianStructures g = compute_structures(model);
    CHECK((g.C.entries() - model.Sigma().entries()).norm() < 1e-12);
    Ensemble ens = equal_ensemble({0.1, -0.4, 0.9, 2.0});
    StepDraws draws = make_step_draws(5, 1, 4, 1);
    StepResult r = opf_step(model, g, ens, Eigen::VectorXd::Constant(1, 3.0), draws);
    for (double w : r.weighted.weights.norm) CHECK(w == doctest::Approx(0.25));
    for (int n = 0; n < 4; ++n) {
        double expected = model.apply_psi(ens.particles[n])[0] +
                          g.C.chol()(0, 0) * draws.gaussians[n][0];
        CHECK(r.weighted.particles[n][0] ==
              doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("OPF collapses onto the data at vanishing observation noise") {
    // Sigma fixed at 1 while gamma -> 0: K -> 1, C -> 0.
    ModelSpec model = scalar_sine_model(1.0, 1e-6);
    GaussianStructures g = compute_structures(model);
    Ensemble ens = equal_ensemble({-2.0, 0.0, 1.5});
    StepDraws draws = make_step_draws(9, 1, 3, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.8);
    StepResult r = opf_step(model, g, ens, y, draws);
    for (const auto& p : r.weighted.particles)
        CHECK(std::abs(p[0] - 0.8) < 1e-4);
}

TEST_CASE("OPF weights depend only on pre-proposal particles") {
    ModelSpec model = scalar_sine_model();
    GaussianStructures g = compute_structures(model);
    Ensemble ens = equal_ensemble({0.4, -1.1, 2.2, 0.0});
    StepDraws draws = make_step_draws(31, 1, 4, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 1.3);
    StepResult r = opf_step(model, g, ens, y, draws);
    for (int n = 0; n < 4; ++n) {
        double lw = -0.5 * weighted_norm_sq(g.S, y - model.H() *
                                                     model.apply_psi(ens.particles[n]));
        CHECK(r.log_unnorm_weights[n] == doctest::Approx(lw).epsilon(1e-12));
    }
}

TEST_CASE("BPF weights depend only on post-proposal particles") {
    ModelSpec model = scalar_sine_model();
    GaussianStructures g = compute_structures(model);
    Ensemble ens = equal_ensemble({0.4, -1.1, 2.2});
    StepDraws draws = make_step_draws(32, 1, 3, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(1, -0.2);
    StepResult r = bpf_step(model, g, ens, y, draws);
    for (int n = 0; n < 3; ++n) {
        double lw = -0.5 * weighted_norm_sq(
                              model.Gamma(),
                              y - model.H() * r.weighted.particles[n]);
        CHECK(r.log_unnorm_weights[n] == doctest::Approx(lw).epsilon(1e-12));
    }
}

TEST_CASE("GOPF forms are bit-identical under shared draws") {
    ModelSpec model = scalar_sine_model();
    GaussianStructures g = compute_structures(model);
    Ensemble ens = equal_ensemble({0.5, -0.5, 1.0, 0.0, 2.0});
    StepDraws draws = make_step_draws(41, 3, 5, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.7);
    GopfStepResult r1 = gopf_step_form1(model, g, ens, y, draws);
    GopfStepResult r2 = gopf_step_form2(model, g, ens, y, draws);
    GopfStepResult r2full = gopf_step_form2(model, g, ens, y, draws, true);
    for (int n = 0; n < 5; ++n) {
        CHECK(r1.next.particles[n] == r2.next.particles[n]);
        CHECK(r1.next.particles[n] == r2full.next.particles[n]);
    }
    CHECK(r1.index_map.indices == r2.index_map.indices);
}

TEST_CASE("GOPF at N=1 matches the noisy 3DVAR chain") {
    ModelSpec model = scalar_sine_model();
    GaussianStructures g = compute_structures(model);
    Ensemble ens = equal_ensemble({0.3});
    StepDraws draws = make_step_draws(42, 1, 1, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(1, -0.9);
    GopfStepResult r = gopf_step_form1(model, g, ens, y, draws);
    double expected = threedvar_step(g, model, ens.particles[0], y)[0] +
                      g.C.chol()(0, 0) * draws.pair_gaussians(0, 0)[0];
    CHECK(r.next.particles[0][0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("SIR with the transition proposal reproduces BPF weights") {
    ModelSpec model = scalar_sine_model();
    GaussianStructures g = compute_structures(model);
    Proposal prop = transition_proposal(model);
    Ensemble ens = equal_ensemble({0.2, -0.6, 1.4, 0.9});
    StepDraws draws = make_step_draws(43, 1, 4, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.1);
    StepResult sir = sir_step(model, prop, ens, y, draws);
    StepResult bpf = bpf_step(model, g, ens, y, draws);
    for (int n = 0; n < 4; ++n) {
        CHECK(sir.weighted.particles[n] == bpf.weighted.particles[n]);
        CHECK(std::abs(sir.weighted.weights.norm[n] -
                       bpf.weighted.weights.norm[n]) < 1e-9);
    }
}

TEST_CASE("SIR with the optimal proposal reproduces OPF weights") {
    ModelSpec model = scalar_sine_model();
    GaussianStructures g = compute_structures(model);
    Proposal prop = optimal_proposal(model, g);
    Ensemble ens = equal_ensemble({0.2, -0.6, 1.4, 0.9});
    StepDraws draws = make_step_draws(44, 1, 4, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.1);
    StepResult sir = sir_step(model, prop, ens, y, draws);
    StepResult opf = opf_step(model, g, ens, y, draws);
    for (int n = 0; n < 4; ++n) {
        CHECK(sir.weighted.particles[n] == opf.weighted.particles[n]);
        CHECK(std::abs(sir.weighted.weights.norm[n] -
                       opf.weighted.weights.norm[n]) < 1e-9);
    }
}

TEST_CASE("SIR with an inflated optimal proposal stays consistent") {
    ModelSpec model = scalar_linear_model();
    GaussianStructures g = compute_structures(model);
    Proposal prop = optimal_proposal(model, g, 2.0);
    TruthRun truth = make_scalar_truth(model, 10, 71);

    GaussianDist mu0(Eigen::VectorXd::Zero(1), SpdMatrix::identity(1));
    FilterRun oracle = run_filter(FilterVariant::KalmanOracle, model, g, truth,
                                  0, 0, InitialDist(mu0));
    FilterRun sir = run_filter(FilterVariant::Sir, model, g, truth, 10000, 321,
                               InitialDist(mu0), &prop);
    double post_sd = std::sqrt(oracle.beliefs.back().cov.entries()(0, 0));
    CHECK(std::abs(sir.weighted.back().mean()[0] -
                   oracle.beliefs.back().mean[0]) < 5.0 * post_sd / 100.0);
}

TEST_CASE("BPF weighted mean tracks the Kalman oracle") {
    ModelSpec model = scalar_linear_model();
    GaussianStructures g = compute_structures(model);
    TruthRun truth = make_scalar_truth(model, 10, 72);
    GaussianDist mu0(Eigen::VectorXd::Zero(1), SpdMatrix::identity(1));
    FilterRun oracle = run_filter(FilterVariant::KalmanOracle, model, g, truth,
                                  0, 0, InitialDist(mu0));
    FilterRun bpf = run_filter(FilterVariant::Bpf, model, g, truth, 10000, 17,
                               InitialDist(mu0));
    for (int k = 1; k <= 10; ++k) {
        double post_sd = std::sqrt(oracle.beliefs[k].cov.entries()(0, 0));
        CHECK(std::abs(bpf.weighted[k - 1].mean()[0] -
                       oracle.beliefs[k].mean[0]) < 5.0 * post_sd / 100.0);
    }
}

TEST_CASE("run_filter determinism and trivial cases") {
    ModelSpec model = scalar_sine_model();
    GaussianStructures g = compute_structures(model);
    TruthRun truth = make_scalar_truth(model, 8, 73);
    InitialDist mu0 = Eigen::VectorXd::Constant(1, 0.5);

    FilterRun a = run_filter(FilterVariant::Opf, model, g, truth, 16, 99, mu0);
    FilterRun b = run_filter(FilterVariant::Opf, model, g, truth, 16, 99, mu0);
    for (std::size_t k = 0; k < a.ensembles.size(); ++k)
        for (int n = 0; n < 16; ++n)
            CHECK(a.ensembles[k].particles[n] == b.ensembles[k].particles[n]);

    FilterRun zero = run_filter(FilterVariant::Bpf, model, g, truth, 4, 99, mu0,
                                nullptr, 0);
    CHECK(zero.ensembles.size() == 1);
    for (const auto& p : zero.ensembles[0].particles) CHECK(p[0] == 0.5);
}

TEST_CASE("3DVAR run iterates the gain map deterministically") {
    ModelSpec model = scalar_sine_model();
    GaussianStructures g = compute_structures(model);
    TruthRun truth = make_scalar_truth(model, 12, 74);
    Eigen::VectorXd m = Eigen::VectorXd::Constant(1, 0.5);
    FilterRun run = run_filter(FilterVariant::ThreeDVar, model, g, truth, 1, 0,
                               InitialDist(m));
    for (int k = 1; k <= 12; ++k) {
        m = threedvar_step(g, model, m, truth.observations[k - 1]);
        CHECK(run.ensembles[k].particles[0] == m);
    }
}

TEST_CASE("kalman oracle run requires a gaussian initialization") {
    ModelSpec model = scalar_linear_model();
    GaussianStructures g = compute_structures(model);
    TruthRun truth = make_scalar_truth(model, 3, 75);
    CHECK_THROWS(run_filter(FilterVariant::KalmanOracle, model, g, truth, 0, 0,
                            InitialDist(Eigen::VectorXd::Zero(1))));
}
