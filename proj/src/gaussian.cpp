#include "assim/gaussian.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace assim {

SpdMatrix::SpdMatrix(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols())
        throw std::invalid_argument("SpdMatrix: matrix is not square");
    if (m.rows() == 0) throw std::invalid_argument("SpdMatrix: empty matrix");

    double scale = m.cwiseAbs().maxCoeff();
    double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (scale > 0.0 && asym > 1e-12 * scale)
        throw std::invalid_argument(
            "SpdMatrix: asymmetry " + std::to_string(asym / scale) +
            " exceeds 1e-12 relative tolerance");

    entries_ = 0.5 * (m + m.transpose());

    Eigen::LLT<Eigen::MatrixXd> llt(entries_);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("SpdMatrix: Cholesky failed, matrix not SPD");
    chol_ = llt.matrixL();

    double pivot_floor = 1e-14 * entries_.trace();
    for (Eigen::Index i = 0; i < dim(); ++i) {
        if (chol_(i, i) * chol_(i, i) < pivot_floor)
            throw std::invalid_argument(
                "SpdMatrix: near-singular, pivot " +
                std::to_string(chol_(i, i) * chol_(i, i)) + " below 1e-14*trace " +
                std::to_string(pivot_floor));
    }
}

Eigen::VectorXd SpdMatrix::solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd y = chol_.triangularView<Eigen::Lower>().solve(b);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::MatrixXd SpdMatrix::solve(const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd y = chol_.triangularView<Eigen::Lower>().solve(b);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::VectorXd SpdMatrix::half_solve(const Eigen::VectorXd& b) const {
    return chol_.triangularView<Eigen::Lower>().solve(b);
}

Eigen::MatrixXd SpdMatrix::inverse() const {
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim(), dim());
    return solve(eye);
}

double SpdMatrix::log_det() const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < dim(); ++i) s += std::log(chol_(i, i));
    return 2.0 * s;
}

SpdMatrix SpdMatrix::identity(Eigen::Index dim) {
    return SpdMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

double weighted_norm_sq(const SpdMatrix& a, const Eigen::VectorXd& x) {
    if (x.size() != a.dim())
        throw std::invalid_argument("weighted_norm_sq: dimension mismatch");
    return a.half_solve(x).squaredNorm();
}

GaussianDist::GaussianDist(Eigen::VectorXd m, SpdMatrix c)
    : mean(std::move(m)), cov(std::move(c)) {
    if (mean.size() != cov.dim())
        throw std::invalid_argument("GaussianDist: mean/cov dimension mismatch");
}

Eigen::VectorXd sample(const GaussianDist& dist, RngStream& rng) {
    return dist.mean + dist.cov.chol() * rng.normals(dist.cov.dim());
}

double log_unnorm_density(const GaussianDist& dist, const Eigen::VectorXd& x) {
    if (x.size() != dist.mean.size())
        throw std::invalid_argument("log_unnorm_density: dimension mismatch");
    return -0.5 * weighted_norm_sq(dist.cov, x - dist.mean);
}

double log_density(const GaussianDist& dist, const Eigen::VectorXd& x) {
    return gaussian_log_density(dist.cov, x - dist.mean);
}

double gaussian_log_density(const SpdMatrix& cov, const Eigen::VectorXd& resid) {
    const double d = static_cast<double>(cov.dim());
    return -0.5 * weighted_norm_sq(cov, resid) -
           0.5 * d * std::log(2.0 * M_PI) - 0.5 * cov.log_det();
}

}  // namespace assim
