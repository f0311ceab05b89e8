#ifndef ASSIM_MODEL_HPP
#define ASSIM_MODEL_HPP

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "assim/gaussian.hpp"
#include "assim/rng.hpp"

namespace assim {

/// State maps are a closed set of builtins so that bounds, Lipschitz
/// certificates and linearity are declared data rather than opaque callables.

/// psi(u) = A u. Unbounded; permitted only for oracle experiments.
struct LinearMap {
    Eigen::MatrixXd matrix;
    double operator_norm;  // declared ||A||_2
};

/// psi(u) = amplitude * sin(B u), elementwise. Bounded by amplitude*sqrt(d).
struct BoundedSineMap {
    double amplitude;
    Eigen::MatrixXd mixing;
};

/// psi(u) = clamp(A u, -clip, clip) componentwise. Bounded by clip*sqrt(d).
struct ClippedLinearMap {
    Eigen::MatrixXd matrix;
    double clip;
};

using BuiltinMap = std::variant<LinearMap, BoundedSineMap, ClippedLinearMap>;

Eigen::VectorXd apply_map(const BuiltinMap& map, const Eigen::VectorXd& u);
bool map_is_bounded(const BuiltinMap& map);

/// Declared bound on sup_u |psi(u)| (Euclidean); +inf for the linear map.
double map_bound(const BuiltinMap& map, Eigen::Index state_dim);

/// Probe the declared bound at random points; returns the max |psi(u)| seen.
double audit_map_bound(const BuiltinMap& map, Eigen::Index state_dim,
                       long probes, RngStream& rng);

/// Conditionally Gaussian dynamics-observation model:
///   u_{k+1} = psi(u_k) + xi_k,    xi_k ~ N(0, sigma^2 Sigma0)
///   y_{k+1} = H u_{k+1} + eta_{k+1},  eta ~ N(0, gamma^2 Gamma0)
class ModelSpec {
public:
    ModelSpec(BuiltinMap psi, Eigen::MatrixXd h, SpdMatrix sigma0,
              SpdMatrix gamma0, double sigma, double gamma);

    Eigen::Index state_dim() const { return sigma_.dim(); }
    Eigen::Index obs_dim() const { return gamma_.dim(); }
    const BuiltinMap& psi() const { return psi_; }
    const Eigen::MatrixXd& H() const { return h_; }
    const SpdMatrix& Sigma0() const { return sigma0_; }
    const SpdMatrix& Gamma0() const { return gamma0_; }
    double sigma() const { return sigma_scalar_; }
    double gamma() const { return gamma_scalar_; }
    double noise_ratio() const { return sigma_scalar_ / gamma_scalar_; }

    /// Sigma = sigma^2 Sigma0.
    const SpdMatrix& Sigma() const { return sigma_; }
    /// Gamma = gamma^2 Gamma0.
    const SpdMatrix& Gamma() const { return gamma_; }

    Eigen::VectorXd apply_psi(const Eigen::VectorXd& u) const {
        return apply_map(psi_, u);
    }

private:
    BuiltinMap psi_;
    Eigen::MatrixXd h_;
    SpdMatrix sigma0_, gamma0_;
    double sigma_scalar_, gamma_scalar_;
    SpdMatrix sigma_, gamma_;
};

/// Fixed true trajectory and its observations (the twin-experiment truth).
struct TruthRun {
    std::vector<Eigen::VectorXd> states;        // u_dagger, length K+1
    std::vector<Eigen::VectorXd> observations;  // y_dagger, length K
    std::uint64_t seed = 0;

    int steps() const { return static_cast<int>(observations.size()); }
};

/// u_{k+1} = psi(u_k) + r*gamma*xi_k, xi ~ N(0, Sigma_star);
/// y_{k+1} = H u_{k+1} + gamma*eta_{k+1}, eta ~ N(0, Gamma_star).
/// Draw order per step: state noise then observation noise.
TruthRun simulate_truth(const ModelSpec& model, int steps,
                        const Eigen::VectorXd& u0,
                        const SpdMatrix& sigma_star,
                        const SpdMatrix& gamma_star, RngStream& rng);

/// H u + eta with eta ~ N(0, gamma^2 Gamma0).
Eigen::VectorXd observe(const ModelSpec& model, const Eigen::VectorXd& u,
                        RngStream& rng);

}  // namespace assim

#endif
