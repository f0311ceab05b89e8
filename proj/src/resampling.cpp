#include "assim/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace assim {

WeightVector WeightVector::equal(int n) {
    WeightVector w;
    w.unnorm.assign(n, 1.0);
    w.norm.assign(n, 1.0 / n);
    return w;
}

WeightVector normalize(const std::vector<double>& unnorm, int step) {
    double sum = 0.0;
    for (double w : unnorm) {
        if (!std::isfinite(w) || w < 0.0)
            throw DegenerateWeightsError(
                "normalize: non-finite or negative weight at step " +
                    std::to_string(step),
                step);
        sum += w;
    }
    if (sum <= 0.0)
        throw DegenerateWeightsError(
            "normalize: all weights zero at step " + std::to_string(step), step);

    WeightVector w;
    w.unnorm = unnorm;
    w.norm.resize(unnorm.size());
    for (std::size_t i = 0; i < unnorm.size(); ++i) w.norm[i] = unnorm[i] / sum;
    return w;
}

WeightVector normalize_log(const std::vector<double>& log_unnorm, int step) {
    double max_log = -std::numeric_limits<double>::infinity();
    for (double lw : log_unnorm) {
        if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity())
            throw DegenerateWeightsError(
                "normalize_log: non-finite log-weight at step " +
                    std::to_string(step),
                step);
        max_log = std::max(max_log, lw);
    }
    if (log_unnorm.empty() || !std::isfinite(max_log))
        throw DegenerateWeightsError(
            "normalize_log: degenerate log-weights at step " + std::to_string(step),
            step);

    std::vector<double> unnorm(log_unnorm.size());
    for (std::size_t i = 0; i < log_unnorm.size(); ++i)
        unnorm[i] = std::exp(log_unnorm[i] - max_log);
    return normalize(unnorm, step);
}

ResampleIndexMap resample_indices(const WeightVector& weights,
                                  const std::vector<double>& uniforms) {
    const int n = weights.size();
    std::vector<double> cum(n);
    double acc = 0.0;
    int last_positive = -1;
    for (int m = 0; m < n; ++m) {
        if (weights.norm[m] > 0.0) last_positive = m;
        acc += weights.norm[m];
        cum[m] = acc;
    }

    ResampleIndexMap map;
    map.uniforms = uniforms;
    map.indices.resize(uniforms.size());
    for (std::size_t i = 0; i < uniforms.size(); ++i) {
        double u = uniforms[i];
        if (u < 0.0 || u >= 1.0)
            throw std::invalid_argument("resample_indices: uniform outside [0,1)");
        // First m with cum[m] > u realizes the half-open interval convention;
        // repeated cumulative values (zero weights) are skipped.
        int idx = static_cast<int>(
            std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        if (idx >= n) idx = last_positive;  // float shortfall in cum[n-1]
        map.indices[i] = idx;
    }
    return map;
}

std::vector<Eigen::VectorXd> apply_indices(
    const std::vector<Eigen::VectorXd>& values, const ResampleIndexMap& map) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(map.indices.size());
    for (int idx : map.indices) {
        if (idx < 0 || idx >= static_cast<int>(values.size()))
            throw std::logic_error("apply_indices: index out of range");
        out.push_back(values[idx]);
    }
    return out;
}

std::vector<Eigen::VectorXd> sampling_operator(
    const std::vector<Eigen::VectorXd>& particles, const WeightVector& weights,
    int n_out, RngStream& rng) {
    std::vector<double> uniforms(n_out);
    for (int i = 0; i < n_out; ++i) uniforms[i] = rng.uniform();
    return apply_indices(particles, resample_indices(weights, uniforms));
}

}  // namespace assim
