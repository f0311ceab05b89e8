#include "assim/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace assim {

Eigen::VectorXd apply_map(const BuiltinMap& map, const Eigen::VectorXd& u) {
    if (const auto* lin = std::get_if<LinearMap>(&map)) {
        return lin->matrix * u;
    }
    if (const auto* sine = std::get_if<BoundedSineMap>(&map)) {
        return sine->amplitude * (sine->mixing * u).array().sin().matrix();
    }
    const auto& cl = std::get<ClippedLinearMap>(map);
    return (cl.matrix * u).cwiseMax(-cl.clip).cwiseMin(cl.clip);
}

bool map_is_bounded(const BuiltinMap& map) {
    return !std::holds_alternative<LinearMap>(map);
}

double map_bound(const BuiltinMap& map, Eigen::Index state_dim) {
    const double root_d = std::sqrt(static_cast<double>(state_dim));
    if (const auto* sine = std::get_if<BoundedSineMap>(&map))
        return std::abs(sine->amplitude) * root_d;
    if (const auto* cl = std::get_if<ClippedLinearMap>(&map))
        return std::abs(cl->clip) * root_d;
    return std::numeric_limits<double>::infinity();
}

double audit_map_bound(const BuiltinMap& map, Eigen::Index state_dim,
                       long probes, RngStream& rng) {
    double worst = 0.0;
    for (long i = 0; i < probes; ++i) {
        // Heavy-tailed probe points: scale normals by a lognormal radius.
        Eigen::VectorXd u = rng.normals(state_dim) * std::exp(2.0 * rng.normal());
        worst = std::max(worst, apply_map(map, u).norm());
    }
    return worst;
}

ModelSpec::ModelSpec(BuiltinMap psi, Eigen::MatrixXd h, SpdMatrix sigma0,
                     SpdMatrix gamma0, double sigma, double gamma)
    : psi_(std::move(psi)),
      h_(std::move(h)),
      sigma0_(std::move(sigma0)),
      gamma0_(std::move(gamma0)),
      sigma_scalar_(sigma),
      gamma_scalar_(gamma),
      sigma_(SpdMatrix(sigma * sigma * sigma0_.entries())),
      gamma_(SpdMatrix(gamma * gamma * gamma0_.entries())) {
    if (sigma <= 0.0 || gamma <= 0.0)
        throw std::invalid_argument("ModelSpec: sigma and gamma must be > 0");
    if (h_.rows() != gamma0_.dim() || h_.cols() != sigma0_.dim())
        throw std::invalid_argument("ModelSpec: H is not obs_dim x state_dim");
}

TruthRun simulate_truth(const ModelSpec& model, int steps,
                        const Eigen::VectorXd& u0,
                        const SpdMatrix& sigma_star,
                        const SpdMatrix& gamma_star, RngStream& rng) {
    if (steps < 1) throw std::invalid_argument("simulate_truth: steps must be >= 1");
    if (u0.size() != model.state_dim() || sigma_star.dim() != model.state_dim() ||
        gamma_star.dim() != model.obs_dim())
        throw std::invalid_argument("simulate_truth: dimension mismatch");

    const double r = model.noise_ratio();
    const double gamma = model.gamma();

    TruthRun run;
    run.seed = rng.key();
    run.states.reserve(steps + 1);
    run.observations.reserve(steps);
    run.states.push_back(u0);
    for (int k = 0; k < steps; ++k) {
        Eigen::VectorXd xi = sigma_star.chol() * rng.normals(model.state_dim());
        Eigen::VectorXd next = model.apply_psi(run.states.back()) + r * gamma * xi;
        Eigen::VectorXd eta = gamma_star.chol() * rng.normals(model.obs_dim());
        run.observations.push_back(model.H() * next + gamma * eta);
        run.states.push_back(std::move(next));
    }
    return run;
}

Eigen::VectorXd observe(const ModelSpec& model, const Eigen::VectorXd& u,
                        RngStream& rng) {
    if (u.size() != model.state_dim())
        throw std::invalid_argument("observe: dimension mismatch");
    return model.H() * u + model.Gamma().chol() * rng.normals(model.obs_dim());
}

}  // namespace assim
