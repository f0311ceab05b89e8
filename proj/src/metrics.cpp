#include "assim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace assim {

TestFunctionDictionary TestFunctionDictionary::make(Eigen::Index state_dim,
                                                    int n_ridges,
                                                    std::uint64_t seed) {
    TestFunctionDictionary dict;
    dict.dim_ = state_dim;
    RngStream rng = RngStream::derive(seed, {0x7e57f0});
    dict.ridges_.reserve(n_ridges);
    for (int i = 0; i < n_ridges; ++i) {
        Ridge r;
        r.direction = rng.normals(state_dim);
        r.offset = rng.normal();
        dict.ridges_.push_back(std::move(r));
    }
    return dict;
}

double TestFunctionDictionary::eval(int i, const Eigen::VectorXd& x) const {
    if (x.size() != dim_)
        throw std::invalid_argument("TestFunctionDictionary: dimension mismatch");
    const int n_ridges = static_cast<int>(ridges_.size());
    if (i < n_ridges)
        return std::tanh(ridges_[i].direction.dot(x) + ridges_[i].offset);
    int j = i - n_ridges;
    if (j >= dim_) throw std::out_of_range("TestFunctionDictionary: bad index");
    return std::clamp(x[j], -1.0, 1.0);
}

double TestFunctionDictionary::empirical_mean(
    int i, const std::vector<Eigen::VectorXd>& particles,
    const WeightVector& weights) const {
    double acc = 0.0;
    for (std::size_t n = 0; n < particles.size(); ++n)
        acc += weights.norm[n] * eval(i, particles[n]);
    return acc;
}

RateFit fit_rate(const std::vector<std::pair<double, double>>& samples,
                 bool log_log) {
    if (samples.size() < 3)
        throw std::invalid_argument("fit_rate: need at least 3 samples");

    RateFit fit;
    fit.samples.reserve(samples.size());
    for (const auto& [x, y] : samples) {
        if (log_log) {
            if (x <= 0.0 || y <= 0.0)
                throw std::invalid_argument("fit_rate: log-log needs positive values");
            fit.samples.emplace_back(std::log(x), std::log(y));
        } else {
            fit.samples.emplace_back(x, y);
        }
    }

    const double n = static_cast<double>(fit.samples.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (const auto& [x, y] : fit.samples) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    double vxx = sxx - sx * sx / n;
    double vxy = sxy - sx * sy / n;
    double vyy = syy - sy * sy / n;
    if (vxx <= 0.0) throw std::invalid_argument("fit_rate: degenerate abscissae");

    fit.slope = vxy / vxx;
    fit.intercept = (sy - fit.slope * sx) / n;
    fit.r_squared = vyy > 0.0 ? (vxy * vxy) / (vxx * vyy) : 1.0;
    return fit;
}

double max_particle_error(const Ensemble& ens, const Eigen::VectorXd& u_dagger) {
    double worst = 0.0;
    for (const auto& p : ens.particles) {
        if (p.size() != u_dagger.size())
            throw std::invalid_argument("max_particle_error: dimension mismatch");
        worst = std::max(worst, (p - u_dagger).squaredNorm());
    }
    return worst;
}

double mean_error(const Ensemble& ens, const Eigen::VectorXd& u_dagger) {
    return (ens.mean() - u_dagger).squaredNorm();
}

double mean_error(const WeightedEnsemble& ens, const Eigen::VectorXd& u_dagger) {
    return (ens.mean() - u_dagger).squaredNorm();
}

namespace {

double estimate_d_impl(const std::vector<Ensemble>& a_runs,
                       const std::vector<Ensemble>* b_runs,
                       const std::vector<double>* fixed_means,
                       const TestFunctionDictionary& dict) {
    const std::size_t r = a_runs.size();
    if (r < 30)
        throw std::invalid_argument("estimate_d: need at least 30 replicates");
    if (b_runs && b_runs->size() != r)
        throw std::invalid_argument("estimate_d: replicate counts differ");

    double best = 0.0;
    for (int i = 0; i < dict.size(); ++i) {
        double acc = 0.0;
        for (std::size_t rep = 0; rep < r; ++rep) {
            double mu_f = dict.empirical_mean(i, a_runs[rep].particles,
                                              a_runs[rep].weights);
            double nu_f = b_runs
                              ? dict.empirical_mean(i, (*b_runs)[rep].particles,
                                                    (*b_runs)[rep].weights)
                              : (*fixed_means)[i];
            acc += (mu_f - nu_f) * (mu_f - nu_f);
        }
        best = std::max(best, std::sqrt(acc / static_cast<double>(r)));
    }
    return best;
}

}  // namespace

double estimate_d(const std::vector<Ensemble>& a_runs,
                  const std::vector<Ensemble>& b_runs,
                  const TestFunctionDictionary& dict) {
    return estimate_d_impl(a_runs, &b_runs, nullptr, dict);
}

double estimate_d(const std::vector<Ensemble>& a_runs,
                  const std::vector<double>& fixed_means,
                  const TestFunctionDictionary& dict) {
    if (static_cast<int>(fixed_means.size()) != dict.size())
        throw std::invalid_argument("estimate_d: fixed_means size mismatch");
    return estimate_d_impl(a_runs, nullptr, &fixed_means, dict);
}

std::vector<double> gaussian_dictionary_means(const TestFunctionDictionary& dict,
                                              const GaussianDist& nu,
                                              long mc_samples,
                                              std::uint64_t seed) {
    std::vector<double> means(dict.size(), 0.0);
    if (nu.cov.dim() == 1) {
        // Simpson quadrature over +-10 standard deviations.
        const double sd = nu.cov.chol()(0, 0);
        const double lo = nu.mean[0] - 10.0 * sd, hi = nu.mean[0] + 10.0 * sd;
        const int n = 4000;  // even
        const double h = (hi - lo) / n;
        for (int i = 0; i < dict.size(); ++i) {
            double acc = 0.0;
            for (int j = 0; j <= n; ++j) {
                double x = lo + j * h;
                double wj = (j == 0 || j == n) ? 1.0 : (j % 2 ? 4.0 : 2.0);
                double pdf = std::exp(-0.5 * std::pow((x - nu.mean[0]) / sd, 2)) /
                             (sd * std::sqrt(2.0 * M_PI));
                Eigen::VectorXd xv(1);
                xv[0] = x;
                acc += wj * pdf * dict.eval(i, xv);
            }
            means[i] = acc * h / 3.0;
        }
        return means;
    }

    RngStream rng = RngStream::derive(seed, {0xd1c7});
    for (long s = 0; s < mc_samples; ++s) {
        Eigen::VectorXd x = nu.mean + nu.cov.chol() * rng.normals(nu.cov.dim());
        for (int i = 0; i < dict.size(); ++i) means[i] += dict.eval(i, x);
    }
    for (double& m : means) m /= static_cast<double>(mc_samples);
    return means;
}

double coupling_discrepancy(const Ensemble& a, const Ensemble& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("coupling_discrepancy: ensemble sizes differ");
    double worst = 0.0;
    for (int n = 0; n < a.size(); ++n)
        worst = std::max(worst, (a.particles[n] - b.particles[n]).norm());
    return worst;
}

}  // namespace assim
