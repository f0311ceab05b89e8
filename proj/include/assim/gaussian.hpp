#ifndef ASSIM_GAUSSIAN_HPP
#define ASSIM_GAUSSIAN_HPP

#include <Eigen/Dense>

#include "assim/rng.hpp"

namespace assim {

/// Dense symmetric positive-definite matrix with its Cholesky factor cached
/// at construction. All quadratic forms and samples go through the factor.
///
/// Inputs are symmetrized as (M + M^T)/2 after a 1e-12 asymmetry guard.
/// Near-singular matrices (pivot below 1e-14 * trace) are rejected rather
/// than regularized.
class SpdMatrix {
public:
    explicit SpdMatrix(const Eigen::MatrixXd& m);

    Eigen::Index dim() const { return entries_.rows(); }
    const Eigen::MatrixXd& entries() const { return entries_; }

    /// Lower-triangular factor L with L L^T = entries.
    const Eigen::MatrixXd& chol() const { return chol_; }

    /// A^{-1} b via two triangular solves.
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

    /// L^{-1} b (forward substitution only).
    Eigen::VectorXd half_solve(const Eigen::VectorXd& b) const;

    /// A^{-1} as a dense matrix, computed through the factor.
    Eigen::MatrixXd inverse() const;

    /// log det A = 2 sum log L_ii.
    double log_det() const;

    static SpdMatrix identity(Eigen::Index dim);

private:
    Eigen::MatrixXd entries_;
    Eigen::MatrixXd chol_;
};

/// x^T A^{-1} x computed via the cached factor.
double weighted_norm_sq(const SpdMatrix& a, const Eigen::VectorXd& x);

struct GaussianDist {
    Eigen::VectorXd mean;
    SpdMatrix cov;

    GaussianDist(Eigen::VectorXd m, SpdMatrix c);
};

/// mean + L z with z standard normal; consumes exactly dim(mean) draws.
Eigen::VectorXd sample(const GaussianDist& dist, RngStream& rng);

/// -1/2 |x - mean|^2_cov. Unnormalized by contract.
double log_unnorm_density(const GaussianDist& dist, const Eigen::VectorXd& x);

/// Fully normalized Gaussian log-density.
double log_density(const GaussianDist& dist, const Eigen::VectorXd& x);

/// Normalized N(0, cov) log-density evaluated at a residual.
double gaussian_log_density(const SpdMatrix& cov, const Eigen::VectorXd& resid);

}  // namespace assim

#endif
