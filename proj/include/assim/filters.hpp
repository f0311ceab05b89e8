#ifndef ASSIM_FILTERS_HPP
#define ASSIM_FILTERS_HPP

#include <functional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "assim/gain.hpp"
#include "assim/gaussian.hpp"
#include "assim/model.hpp"
#include "assim/resampling.hpp"

namespace assim {

struct Ensemble {
    std::vector<Eigen::VectorXd> particles;
    WeightVector weights;  // equal after resampling steps
    int step_index = 0;

    int size() const { return static_cast<int>(particles.size()); }
    Eigen::VectorXd mean() const;
};

struct WeightedEnsemble {
    std::vector<Eigen::VectorXd> particles;
    WeightVector weights;

    Eigen::VectorXd mean() const;
};

/// Per-step randomness, regenerable from (run key, step index).
/// Convention: all state-noise gaussians in particle order first, then all
/// resampling uniforms in particle order. Gaussians are stored as standard
/// normals; each step scales them by the appropriate Cholesky factor, so two
/// filters sharing a key share the underlying draws.
struct StepDraws {
    std::vector<Eigen::VectorXd> gaussians;  // N standard-normal state vectors
    std::vector<double> uniforms;            // N resampling uniforms
    // GOPF pair noise zeta^{(m,n)}, generated lazily per (step, m, n).
    std::function<Eigen::VectorXd(int m, int n)> pair_gaussians;
};

StepDraws make_step_draws(std::uint64_t run_key, int step, int n_particles,
                          Eigen::Index state_dim);

/// Gaussian proposal pi(u_{k+1} | u_k, y_{k+1}) for the generic SIR.
/// sample() is driven by an externally supplied standard-normal vector so
/// draws stay owned by StepDraws; log_density is a proper (normalized)
/// log-density in u_next.
struct Proposal {
    std::function<Eigen::VectorXd(const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& z)>
        sample;
    std::function<double(const Eigen::VectorXd& u_next, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& y)>
        log_density;
};

/// pi = P(u_next | u): SIR reduces to the BPF.
Proposal transition_proposal(const ModelSpec& model);
/// pi = P(u_next | u, y): SIR reduces to the OPF. cov_scale inflates the
/// proposal covariance (cov_scale * C) while keeping the SIR valid.
Proposal optimal_proposal(const ModelSpec& model, const GaussianStructures& g,
                          double cov_scale = 1.0);

struct StepResult {
    Ensemble resampled;          // equal-weight, post-resampling
    WeightedEnsemble weighted;   // pre-resampling hatted measure
    std::vector<double> log_unnorm_weights;
    ResampleIndexMap index_map;
};

/// Propagate with model noise, weight by observation likelihood, resample.
StepResult bpf_step(const ModelSpec& model, const GaussianStructures& g,
                    const Ensemble& ens, const Eigen::VectorXd& y_next,
                    const StepDraws& draws);

/// Propagate with the optimal proposal, weight from the PRE-proposal
/// particles, resample (propagate-weight-resample).
StepResult opf_step(const ModelSpec& model, const GaussianStructures& g,
                    const Ensemble& ens, const Eigen::VectorXd& y_next,
                    const StepDraws& draws);

struct GopfStepResult {
    Ensemble next;
    std::vector<double> log_unnorm_weights;
    ResampleIndexMap index_map;
};

/// Weight-resample-propagate form. The propagation noise for slot n is the
/// pair draw zeta^{(m*(n),n)}, so form 1 and form 2 are pathwise identical
/// under shared draws.
GopfStepResult gopf_step_form1(const ModelSpec& model,
                               const GaussianStructures& g, const Ensemble& ens,
                               const Eigen::VectorXd& y_next,
                               const StepDraws& draws);

/// Pairwise form: conceptually materializes vhat^{(m,n)} for all (m,n) and
/// keeps row m*(n) per slot. By default only the selected rows are generated;
/// materialize_all builds the full N x N array (debug path).
GopfStepResult gopf_step_form2(const ModelSpec& model,
                               const GaussianStructures& g, const Ensemble& ens,
                               const Eigen::VectorXd& y_next,
                               const StepDraws& draws,
                               bool materialize_all = false);

/// Generic sequential importance resampler with proposal pi.
StepResult sir_step(const ModelSpec& model, const Proposal& proposal,
                    const Ensemble& ens, const Eigen::VectorXd& y_next,
                    const StepDraws& draws);

enum class FilterVariant { Bpf, Opf, Gopf1, Gopf2, Sir, ThreeDVar, KalmanOracle };

/// Initial distribution: Dirac mass at a point, or a Gaussian.
using InitialDist = std::variant<Eigen::VectorXd, GaussianDist>;

struct FilterRun {
    std::vector<Ensemble> ensembles;              // k = 0..K
    std::vector<WeightedEnsemble> weighted;       // k = 1..K (bpf/opf/sir)
    std::vector<std::vector<double>> log_unnorm_weights;  // k = 1..K
    std::vector<GaussianBelief> beliefs;          // Kalman oracle, k = 0..K
};

/// Run `steps` assimilation cycles against truth.observations. All
/// randomness derives from (seed, step, particle); runs sharing a seed share
/// draws (common-random-numbers contract).
FilterRun run_filter(FilterVariant variant, const ModelSpec& model,
                     const GaussianStructures& g, const TruthRun& truth,
                     int n_particles, std::uint64_t seed,
                     const InitialDist& mu0,
                     const Proposal* proposal = nullptr, int steps = -1);

}  // namespace assim

#endif
