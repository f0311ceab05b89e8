#ifndef ASSIM_RESAMPLING_HPP
#define ASSIM_RESAMPLING_HPP

#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "assim/rng.hpp"

namespace assim {

class DegenerateWeightsError : public std::runtime_error {
public:
    DegenerateWeightsError(const std::string& what, int step)
        : std::runtime_error(what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

struct WeightVector {
    std::vector<double> unnorm;
    std::vector<double> norm;

    int size() const { return static_cast<int>(norm.size()); }

    static WeightVector equal(int n);
};

/// norm[i] = unnorm[i] / sum(unnorm). Throws DegenerateWeightsError on
/// all-zero or non-finite input.
WeightVector normalize(const std::vector<double>& unnorm, int step = -1);

/// Log-space path: exponentiates after max-subtraction, then normalizes.
/// The stored unnorm entries are exp(logw - max logw).
WeightVector normalize_log(const std::vector<double>& log_unnorm, int step = -1);

/// Multinomial interval-inversion resampling: index n maps to the unique m
/// with uniforms[n] in [alpha_m, alpha_{m+1}), alpha cumulative weights.
/// Half-open intervals; zero-weight particles get zero-length intervals and
/// are never selected.
struct ResampleIndexMap {
    std::vector<int> indices;
    std::vector<double> uniforms;
};

ResampleIndexMap resample_indices(const WeightVector& weights,
                                  const std::vector<double>& uniforms);

std::vector<Eigen::VectorXd> apply_indices(
    const std::vector<Eigen::VectorXd>& values, const ResampleIndexMap& map);

/// The sampling operator S^N applied to a weighted empirical measure:
/// draws n_out i.i.d. uniforms and composes resample_indices + apply_indices.
std::vector<Eigen::VectorXd> sampling_operator(
    const std::vector<Eigen::VectorXd>& particles, const WeightVector& weights,
    int n_out, RngStream& rng);

}  // namespace assim

#endif
