#ifndef ASSIM_GAIN_HPP
#define ASSIM_GAIN_HPP

#include <utility>

#include <Eigen/Dense>

#include "assim/gaussian.hpp"
#include "assim/model.hpp"

namespace assim {

/// Derived Gaussian structures of the optimal proposal:
///   S = H Sigma H^T + Gamma
///   K = Sigma H^T S^{-1}
///   C^{-1} = Sigma^{-1} + H^T Gamma^{-1} H, equivalently C = (I - KH) Sigma.
struct GaussianStructures {
    SpdMatrix C;                // state_dim
    SpdMatrix S;                // obs_dim
    Eigen::MatrixXd K;          // state_dim x obs_dim
    Eigen::MatrixXd IminusKH;   // state_dim x state_dim
};

GaussianStructures compute_structures(const ModelSpec& model);

/// Cycled 3DVAR update: (I - KH) psi(m) + K y.
Eigen::VectorXd threedvar_step(const GaussianStructures& g,
                               const ModelSpec& model,
                               const Eigen::VectorXd& m,
                               const Eigen::VectorXd& y);

/// Mean of the optimal proposal P(u_{k+1} | u_k, y_{k+1}); Kalman-gain form,
/// identical to threedvar_step by construction.
Eigen::VectorXd optimal_proposal_mean(const GaussianStructures& g,
                                      const ModelSpec& model,
                                      const Eigen::VectorXd& u,
                                      const Eigen::VectorXd& y);

/// Precision-form evaluation C (Sigma^{-1} psi(u) + H^T Gamma^{-1} y);
/// agrees with the gain form to 1e-9. Kept for dual-route checks.
Eigen::VectorXd optimal_proposal_mean_precision_form(
    const GaussianStructures& g, const ModelSpec& model,
    const Eigen::VectorXd& u, const Eigen::VectorXd& y);

/// Exact posterior for linear psi; ground truth for consistency tests only.
/// Deliberately outside the bounded-map assumption.
struct GaussianBelief {
    Eigen::VectorXd mean;
    SpdMatrix cov;
};

/// One Kalman predict/update cycle. Throws unless the model map is linear.
GaussianBelief kalman_oracle_step(const ModelSpec& model,
                                  const GaussianBelief& belief,
                                  const Eigen::VectorXd& y);

/// The two unnormalized log-kernels of the one-step transition:
///   first  = -1/2 |y - H u_next|^2_Gamma - 1/2 |u_next - psi(u)|^2_Sigma
///   second = -1/2 |y - H psi(u)|^2_S    - 1/2 |u_next - m|^2_C
/// Their difference is a model constant (the log-normalization offset).
std::pair<double, double> transition_logdensity_two_forms(
    const GaussianStructures& g, const ModelSpec& model,
    const Eigen::VectorXd& u_k, const Eigen::VectorXd& u_next,
    const Eigen::VectorXd& y_next);

}  // namespace assim

#endif
