#include "assim/rng.hpp"

#include <cmath>

namespace assim {

namespace detail {

// 64-bit finalizer (murmur3 variant); full avalanche.
std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 33;
    z *= 0xff51afd7ed558ccdULL;
    z ^= z >> 33;
    z *= 0xc4ceb9fe1a85ec53ULL;
    z ^= z >> 33;
    return z;
}

std::uint64_t chain_key(std::uint64_t key, std::uint64_t word) {
    return mix64(key + 0x9e3779b97f4a7c15ULL + mix64(word ^ 0xd1b54a32d192ed03ULL));
}

// Acklam's rational approximation for the standard normal quantile,
// refined with one Halley step against erfc. Accurate to ~1e-15.
double inverse_normal_cdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // One Halley refinement: e = Phi(x) - p.
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

}  // namespace detail

RngStream RngStream::derive(std::uint64_t master,
                            std::initializer_list<std::uint64_t> path) {
    std::uint64_t key = detail::mix64(master ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t word : path) key = detail::chain_key(key, word);
    return RngStream(key);
}

RngStream RngStream::fork(std::uint64_t index) const {
    return RngStream(detail::chain_key(key_, index));
}

double RngStream::uniform() {
    std::uint64_t raw =
        detail::mix64(key_ ^ (0x9e3779b97f4a7c15ULL * (counter_++ + 1)));
    return static_cast<double>(raw >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    // uniform() is in [0,1); shift to (0,1) to keep the quantile finite.
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-54;
    return detail::inverse_normal_cdf(u);
}

Eigen::VectorXd RngStream::normals(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
    return z;
}

}  // namespace assim
