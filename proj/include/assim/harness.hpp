#ifndef ASSIM_HARNESS_HPP
#define ASSIM_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "assim/filters.hpp"
#include "assim/model.hpp"

namespace assim {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Twin-experiment configuration. One config drives one experiment; the
/// `all` verb composes four of them. Matrices are row-major lists in the
/// JSON form (see config_from_json).
struct ExperimentConfig {
    std::string experiment;  // identities|consistency|accuracy|ergodicity
    std::uint64_t master_seed = 20260823;
    int threads = 1;
    std::string out_dir = "out";

    // model block
    BuiltinMap map = BoundedSineMap{1.0, Eigen::MatrixXd::Identity(1, 1)};
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(1, 1);
    Eigen::MatrixXd Sigma0 = Eigen::MatrixXd::Identity(1, 1);
    Eigen::MatrixXd Gamma0 = Eigen::MatrixXd::Identity(1, 1);
    double r = 0.5;
    double gamma = 1.0;

    // truth block
    Eigen::VectorXd truth_u0 = Eigen::VectorXd::Zero(1);
    int truth_steps = 10;
    std::optional<Eigen::MatrixXd> Sigma_star;  // defaults to Sigma0
    std::optional<Eigen::MatrixXd> Gamma_star;  // defaults to Gamma0
    std::vector<std::uint64_t> truth_seeds = {1};
    std::optional<double> truth_r;  // defaults to r (mis-specification knob)

    // filter block
    std::vector<std::string> variants = {"bpf", "opf", "gopf"};
    std::vector<long> particle_counts = {100};
    std::vector<double> gamma_sweep = {1.0};
    std::vector<std::uint64_t> filter_seeds = {1};
    InitialDist mu0 = Eigen::VectorXd::Zero(1);

    // experiment-specific knobs
    int replicates = 50;           // consistency
    bool self_reference = false;   // consistency fallback for nonlinear maps
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(1);        // ergodicity
    Eigen::VectorXd z0_prime = Eigen::VectorXd::Zero(1);  // ergodicity
    int ergodicity_pairs = 50;
};

Eigen::Index config_state_dim(const ExperimentConfig& cfg);
Eigen::Index config_obs_dim(const ExperimentConfig& cfg);

/// Model at a given observation-noise level; sigma = r * gamma throughout.
ModelSpec make_model(const ExperimentConfig& cfg, double gamma);

ExperimentConfig default_config(const std::string& experiment,
                                std::uint64_t seed);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

struct ReportRow {
    std::string experiment;
    std::string variant;
    long n_particles = 0;
    double gamma = 0.0;
    int k = 0;
    std::uint64_t seed = 0;
    std::string metric;
    double value = 0.0;
};

struct ExperimentReport {
    std::vector<ReportRow> rows;
    nlohmann::json summary = nlohmann::json::object();
    bool all_pass = true;

    void add(ReportRow row) { rows.push_back(std::move(row)); }
    /// Record a named criterion outcome in the summary.
    void criterion(const std::string& name, bool pass, double value);
    void merge(const ExperimentReport& other);
};

ExperimentReport run_identities(const ExperimentConfig& cfg);
ExperimentReport run_consistency(const ExperimentConfig& cfg);
ExperimentReport run_accuracy(const ExperimentConfig& cfg);
ExperimentReport run_ergodicity(const ExperimentConfig& cfg);

ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Compose the four experiments. `overrides`, when present, may carry a full
/// config object per experiment name; absent entries use defaults.
ExperimentReport run_all(std::uint64_t seed, int threads,
                         const nlohmann::json* overrides = nullptr);

/// Write report.csv (fixed header, one row per record) and summary.json
/// (criteria, config echo and hash, seeds, library version) under out_dir.
/// Byte-stable for identical inputs.
void emit(const ExperimentReport& report, const std::string& out_dir,
          const nlohmann::json& config_echo);

/// Deterministic worker pool: fn(i) for i in [0, total); results must be
/// written into preallocated slots so thread count never changes output.
void parallel_for(long total, int threads, const std::function<void(long)>& fn);

}  // namespace assim

#endif
