#include "assim/gain.hpp"

#include <stdexcept>

namespace assim {

GaussianStructures compute_structures(const ModelSpec& model) {
    const Eigen::MatrixXd& h = model.H();
    const Eigen::MatrixXd& sigma = model.Sigma().entries();
    const Eigen::MatrixXd& gamma = model.Gamma().entries();
    const Eigen::Index d = model.state_dim();

    SpdMatrix s(h * sigma * h.transpose() + gamma);

    // K = Sigma H^T S^{-1} via K^T = S^{-1} (H Sigma).
    Eigen::MatrixXd k = s.solve((h * sigma).eval()).transpose();

    // C from its precision, inverted through the factor.
    Eigen::MatrixXd c_inv = model.Sigma().inverse() +
                            h.transpose() * model.Gamma().solve(h);
    SpdMatrix c(SpdMatrix(c_inv).inverse());

    Eigen::MatrixXd i_minus_kh = Eigen::MatrixXd::Identity(d, d) - k * h;
    return GaussianStructures{std::move(c), std::move(s), std::move(k),
                              std::move(i_minus_kh)};
}

Eigen::VectorXd threedvar_step(const GaussianStructures& g,
                               const ModelSpec& model,
                               const Eigen::VectorXd& m,
                               const Eigen::VectorXd& y) {
    if (m.size() != model.state_dim() || y.size() != model.obs_dim())
        throw std::invalid_argument("threedvar_step: dimension mismatch");
    return g.IminusKH * model.apply_psi(m) + g.K * y;
}

Eigen::VectorXd optimal_proposal_mean(const GaussianStructures& g,
                                      const ModelSpec& model,
                                      const Eigen::VectorXd& u,
                                      const Eigen::VectorXd& y) {
    return threedvar_step(g, model, u, y);
}

Eigen::VectorXd optimal_proposal_mean_precision_form(
    const GaussianStructures& g, const ModelSpec& model,
    const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
    if (u.size() != model.state_dim() || y.size() != model.obs_dim())
        throw std::invalid_argument("optimal_proposal_mean: dimension mismatch");
    Eigen::VectorXd rhs = model.Sigma().solve(model.apply_psi(u)) +
                          model.H().transpose() * model.Gamma().solve(y);
    return g.C.entries() * rhs;
}

GaussianBelief kalman_oracle_step(const ModelSpec& model,
                                  const GaussianBelief& belief,
                                  const Eigen::VectorXd& y) {
    const auto* lin = std::get_if<LinearMap>(&model.psi());
    if (!lin)
        throw std::invalid_argument("kalman_oracle_step: oracle requires linear model");
    if (belief.mean.size() != model.state_dim() || y.size() != model.obs_dim())
        throw std::invalid_argument("kalman_oracle_step: dimension mismatch");

    const Eigen::MatrixXd& a = lin->matrix;
    const Eigen::MatrixXd& h = model.H();
    const Eigen::Index d = model.state_dim();

    // Predict.
    Eigen::VectorXd m_pred = a * belief.mean;
    Eigen::MatrixXd p_pred = a * belief.cov.entries() * a.transpose() +
                             model.Sigma().entries();

    // Update with gain P- H^T (H P- H^T + Gamma)^{-1}.
    SpdMatrix innov_cov(h * p_pred * h.transpose() + model.Gamma().entries());
    Eigen::MatrixXd gain = innov_cov.solve((h * p_pred).eval()).transpose();
    Eigen::VectorXd m_post = m_pred + gain * (y - h * m_pred);
    Eigen::MatrixXd p_post =
        (Eigen::MatrixXd::Identity(d, d) - gain * h) * p_pred;
    return GaussianBelief{std::move(m_post), SpdMatrix(p_post)};
}

std::pair<double, double> transition_logdensity_two_forms(
    const GaussianStructures& g, const ModelSpec& model,
    const Eigen::VectorXd& u_k, const Eigen::VectorXd& u_next,
    const Eigen::VectorXd& y_next) {
    if (u_k.size() != model.state_dim() || u_next.size() != model.state_dim() ||
        y_next.size() != model.obs_dim())
        throw std::invalid_argument(
            "transition_logdensity_two_forms: dimension mismatch");

    Eigen::VectorXd psi_u = model.apply_psi(u_k);
    double first = -0.5 * weighted_norm_sq(model.Gamma(), y_next - model.H() * u_next) -
                   0.5 * weighted_norm_sq(model.Sigma(), u_next - psi_u);

    Eigen::VectorXd m = g.IminusKH * psi_u + g.K * y_next;
    double second = -0.5 * weighted_norm_sq(g.S, y_next - model.H() * psi_u) -
                    0.5 * weighted_norm_sq(g.C, u_next - m);
    return {first, second};
}

}  // namespace assim
