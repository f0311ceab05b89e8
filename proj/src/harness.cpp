#include "assim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "assim/gain.hpp"
#include "assim/metrics.hpp"

namespace assim {

namespace {

// Stream purpose tags under the master seed.
constexpr std::uint64_t kTagTruth = 101;
constexpr std::uint64_t kTagFilter = 102;
constexpr std::uint64_t kTagReference = 103;
constexpr std::uint64_t kTagIdentities = 104;
constexpr std::uint64_t kTagPair = 105;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows,
                                 Eigen::Index cols) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows * cols)
        throw std::invalid_argument("config: matrix entry count mismatch");
    Eigen::MatrixXd m(rows, cols);
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[idx++].get<double>();
    return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(i, c));
    return arr;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

double spectral_norm(const Eigen::MatrixXd& m) {
    return m.jacobiSvd().singularValues()(0);
}

FilterVariant variant_from_name(const std::string& name) {
    if (name == "bpf") return FilterVariant::Bpf;
    if (name == "opf") return FilterVariant::Opf;
    if (name == "gopf" || name == "gopf1") return FilterVariant::Gopf1;
    if (name == "gopf2") return FilterVariant::Gopf2;
    if (name == "threedvar" || name == "3dvar") return FilterVariant::ThreeDVar;
    throw std::invalid_argument("unknown filter variant: " + name);
}

bool variant_has_weighted(FilterVariant v) {
    return v == FilterVariant::Bpf || v == FilterVariant::Opf ||
           v == FilterVariant::Sir;
}

Eigen::VectorXd run_terminal_mean(const FilterRun& run, FilterVariant v) {
    if (variant_has_weighted(v) && !run.weighted.empty())
        return run.weighted.back().mean();
    return run.ensembles.back().mean();
}

SpdMatrix effective_sigma_star(const ExperimentConfig& cfg) {
    return SpdMatrix(cfg.Sigma_star.value_or(cfg.Sigma0));
}

SpdMatrix effective_gamma_star(const ExperimentConfig& cfg) {
    return SpdMatrix(cfg.Gamma_star.value_or(cfg.Gamma0));
}

TruthRun make_truth(const ExperimentConfig& cfg, const ModelSpec& model,
                    std::uint64_t truth_seed) {
    RngStream rng = RngStream::derive(cfg.master_seed, {kTagTruth, truth_seed});
    if (cfg.truth_r.has_value()) {
        // Truth generated with its own signal-noise ratio (possibly 0):
        // scale Sigma_star so that r_model * chol(Sigma_scaled) = r_truth * chol(Sigma_star).
        double r_model = cfg.r;
        double r_truth = *cfg.truth_r;
        double scale = r_truth / r_model;
        Eigen::MatrixXd sstar = cfg.Sigma_star.value_or(cfg.Sigma0);
        Eigen::MatrixXd scaled = scale * scale * sstar;
        if (r_truth == 0.0)
            scaled = 1e-30 * Eigen::MatrixXd::Identity(sstar.rows(), sstar.cols());
        return simulate_truth(model, cfg.truth_steps, cfg.truth_u0,
                              SpdMatrix(scaled), effective_gamma_star(cfg), rng);
    }
    return simulate_truth(model, cfg.truth_steps, cfg.truth_u0,
                          effective_sigma_star(cfg), effective_gamma_star(cfg),
                          rng);
}

// Contraction certificate for the bounded-sine map: alpha <= |a| * ||(I-KH) B||.
double sine_contraction_factor(const ExperimentConfig& cfg,
                               const GaussianStructures& g) {
    const auto* sine = std::get_if<BoundedSineMap>(&cfg.map);
    if (!sine)
        throw std::invalid_argument(
            "contraction certificate requires the bounded_sine map");
    return std::abs(sine->amplitude) * spectral_norm(g.IminusKH * sine->mixing);
}

Eigen::MatrixXd random_spd(Eigen::Index d, RngStream& rng) {
    Eigen::MatrixXd m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
    return m * m.transpose() / static_cast<double>(d) +
           (0.3 + rng.uniform()) * Eigen::MatrixXd::Identity(d, d);
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                              RngStream& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

double rel_residual(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs) {
    double denom = std::max(1e-300, rhs.norm());
    return (lhs - rhs).norm() / denom;
}

}  // namespace

void ExperimentReport::criterion(const std::string& name, bool pass,
                                 double value) {
    summary["criteria"][name] = {{"pass", pass}, {"value", value}};
    all_pass = all_pass && pass;
}

void ExperimentReport::merge(const ExperimentReport& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    if (other.summary.contains("criteria"))
        for (auto& [k, v] : other.summary.at("criteria").items())
            summary["criteria"][k] = v;
    if (other.summary.contains("warnings"))
        for (auto& w : other.summary.at("warnings"))
            summary["warnings"].push_back(w);
    all_pass = all_pass && other.all_pass;
}

Eigen::Index config_state_dim(const ExperimentConfig& cfg) {
    return cfg.Sigma0.rows();
}

Eigen::Index config_obs_dim(const ExperimentConfig& cfg) {
    return cfg.Gamma0.rows();
}

ModelSpec make_model(const ExperimentConfig& cfg, double gamma) {
    return ModelSpec(cfg.map, cfg.H, SpdMatrix(cfg.Sigma0), SpdMatrix(cfg.Gamma0),
                     cfg.r * gamma, gamma);
}

ExperimentConfig default_config(const std::string& experiment,
                                std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.experiment = experiment;
    cfg.master_seed = seed;

    if (experiment == "identities") {
        return cfg;
    }
    if (experiment == "consistency") {
        // Scalar linear model; the Kalman oracle is exact here.
        Eigen::MatrixXd a(1, 1);
        a << 0.9;
        cfg.map = LinearMap{a, 0.9};
        cfg.r = 1.0;
        cfg.gamma = 1.0;
        cfg.truth_steps = 10;
        cfg.truth_seeds = {7};
        cfg.variants = {"bpf", "opf", "gopf"};
        cfg.particle_counts = {100, 1000, 10000};
        cfg.replicates = 50;
        cfg.mu0 = GaussianDist(Eigen::VectorXd::Zero(1), SpdMatrix::identity(1));
        return cfg;
    }
    if (experiment == "accuracy") {
        cfg.map = BoundedSineMap{1.0, Eigen::MatrixXd::Identity(1, 1)};
        cfg.r = 0.5;
        cfg.truth_steps = 200;
        cfg.truth_seeds.clear();
        for (std::uint64_t s = 1; s <= 20; ++s) cfg.truth_seeds.push_back(s);
        cfg.filter_seeds = {1, 2, 3, 4, 5};
        cfg.variants = {"opf", "gopf", "threedvar"};
        cfg.particle_counts = {32};
        cfg.gamma_sweep = {0.1, 0.03, 0.01};
        cfg.mu0 = Eigen::VectorXd::Zero(1);
        return cfg;
    }
    if (experiment == "ergodicity") {
        // Mild contraction (alpha = 0.4) and flat-ish weights so the
        // common-random-numbers coupling rarely desynchronizes resampling.
        cfg.map = BoundedSineMap{0.5, Eigen::MatrixXd::Identity(1, 1)};
        cfg.r = 0.5;
        cfg.gamma = 3.0;
        cfg.truth_steps = 50;
        cfg.variants = {"threedvar", "opf", "gopf"};
        cfg.particle_counts = {16};
        cfg.ergodicity_pairs = 50;
        cfg.z0 = Eigen::VectorXd::Constant(1, 2.5);
        cfg.z0_prime = Eigen::VectorXd::Constant(1, -2.5);
        return cfg;
    }
    throw std::invalid_argument("default_config: unknown experiment " + experiment);
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        cfg.experiment = j.at("experiment").get<std::string>();
        if (j.contains("seed")) cfg.master_seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
        if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();

        const auto& jm = j.at("model");
        Eigen::Index d = jm.at("state_dim").get<Eigen::Index>();
        Eigen::Index p = jm.at("obs_dim").get<Eigen::Index>();
        const auto& jmap = jm.at("map");
        std::string type = jmap.at("type").get<std::string>();
        if (type == "linear") {
            cfg.map = LinearMap{matrix_from_json(jmap.at("matrix"), d, d),
                                jmap.at("operator_norm").get<double>()};
        } else if (type == "bounded_sine") {
            cfg.map = BoundedSineMap{jmap.at("amplitude").get<double>(),
                                     matrix_from_json(jmap.at("mixing"), d, d)};
        } else if (type == "clipped_linear") {
            cfg.map = ClippedLinearMap{matrix_from_json(jmap.at("matrix"), d, d),
                                       jmap.at("clip").get<double>()};
        } else {
            throw std::invalid_argument("config: unknown map type " + type);
        }
        cfg.H = matrix_from_json(jm.at("H"), p, d);
        cfg.Sigma0 = matrix_from_json(jm.at("Sigma0"), d, d);
        cfg.Gamma0 = matrix_from_json(jm.at("Gamma0"), p, p);
        cfg.r = jm.at("r").get<double>();
        cfg.gamma = jm.at("gamma").get<double>();

        const auto& jt = j.at("truth");
        cfg.truth_u0 = vector_from_json(jt.at("u0"));
        cfg.truth_steps = jt.at("steps").get<int>();
        if (jt.contains("Sigma_star") && !jt.at("Sigma_star").is_null())
            cfg.Sigma_star = matrix_from_json(jt.at("Sigma_star"), d, d);
        if (jt.contains("Gamma_star") && !jt.at("Gamma_star").is_null())
            cfg.Gamma_star = matrix_from_json(jt.at("Gamma_star"), p, p);
        if (jt.contains("seeds"))
            cfg.truth_seeds = jt.at("seeds").get<std::vector<std::uint64_t>>();
        if (jt.contains("r") && !jt.at("r").is_null())
            cfg.truth_r = jt.at("r").get<double>();

        const auto& jf = j.at("filter");
        cfg.variants = jf.at("variants").get<std::vector<std::string>>();
        cfg.particle_counts = jf.at("N").get<std::vector<long>>();
        if (jf.contains("gamma"))
            cfg.gamma_sweep = jf.at("gamma").get<std::vector<double>>();
        if (jf.contains("seeds"))
            cfg.filter_seeds = jf.at("seeds").get<std::vector<std::uint64_t>>();
        const auto& jmu = jf.at("mu0");
        if (jmu.at("type") == "dirac") {
            cfg.mu0 = vector_from_json(jmu.at("point"));
        } else if (jmu.at("type") == "gaussian") {
            cfg.mu0 = GaussianDist(vector_from_json(jmu.at("mean")),
                                   SpdMatrix(matrix_from_json(jmu.at("cov"), d, d)));
        } else {
            throw std::invalid_argument("config: unknown mu0 type");
        }

        if (j.contains("consistency")) {
            const auto& jc = j.at("consistency");
            if (jc.contains("replicates"))
                cfg.replicates = jc.at("replicates").get<int>();
            if (jc.contains("self_reference"))
                cfg.self_reference = jc.at("self_reference").get<bool>();
        }
        if (j.contains("ergodicity")) {
            const auto& je = j.at("ergodicity");
            if (je.contains("z0")) cfg.z0 = vector_from_json(je.at("z0"));
            if (je.contains("z0_prime"))
                cfg.z0_prime = vector_from_json(je.at("z0_prime"));
            if (je.contains("pairs"))
                cfg.ergodicity_pairs = je.at("pairs").get<int>();
        }

        if (cfg.variants.empty() || cfg.particle_counts.empty() ||
            cfg.gamma_sweep.empty() || cfg.truth_seeds.empty() ||
            cfg.filter_seeds.empty())
            throw std::invalid_argument("config: sweep lists must be nonempty");
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["experiment"] = cfg.experiment;
    j["seed"] = cfg.master_seed;
    j["threads"] = cfg.threads;
    j["out"] = cfg.out_dir;

    nlohmann::json jmap;
    if (const auto* lin = std::get_if<LinearMap>(&cfg.map)) {
        jmap = {{"type", "linear"},
                {"matrix", matrix_to_json(lin->matrix)},
                {"operator_norm", lin->operator_norm}};
    } else if (const auto* sine = std::get_if<BoundedSineMap>(&cfg.map)) {
        jmap = {{"type", "bounded_sine"},
                {"amplitude", sine->amplitude},
                {"mixing", matrix_to_json(sine->mixing)}};
    } else {
        const auto& cl = std::get<ClippedLinearMap>(cfg.map);
        jmap = {{"type", "clipped_linear"},
                {"matrix", matrix_to_json(cl.matrix)},
                {"clip", cl.clip}};
    }
    j["model"] = {{"state_dim", config_state_dim(cfg)},
                  {"obs_dim", config_obs_dim(cfg)},
                  {"map", jmap},
                  {"H", matrix_to_json(cfg.H)},
                  {"Sigma0", matrix_to_json(cfg.Sigma0)},
                  {"Gamma0", matrix_to_json(cfg.Gamma0)},
                  {"r", cfg.r},
                  {"gamma", cfg.gamma}};

    j["truth"] = {{"u0", matrix_to_json(cfg.truth_u0)},
                  {"steps", cfg.truth_steps},
                  {"seeds", cfg.truth_seeds}};
    if (cfg.Sigma_star) j["truth"]["Sigma_star"] = matrix_to_json(*cfg.Sigma_star);
    if (cfg.Gamma_star) j["truth"]["Gamma_star"] = matrix_to_json(*cfg.Gamma_star);
    if (cfg.truth_r) j["truth"]["r"] = *cfg.truth_r;

    nlohmann::json jmu;
    if (const auto* point = std::get_if<Eigen::VectorXd>(&cfg.mu0)) {
        jmu = {{"type", "dirac"}, {"point", matrix_to_json(*point)}};
    } else {
        const auto& gauss = std::get<GaussianDist>(cfg.mu0);
        jmu = {{"type", "gaussian"},
               {"mean", matrix_to_json(gauss.mean)},
               {"cov", matrix_to_json(gauss.cov.entries())}};
    }
    j["filter"] = {{"variants", cfg.variants},
                   {"N", cfg.particle_counts},
                   {"gamma", cfg.gamma_sweep},
                   {"seeds", cfg.filter_seeds},
                   {"mu0", jmu}};

    j["consistency"] = {{"replicates", cfg.replicates},
                        {"self_reference", cfg.self_reference}};
    j["ergodicity"] = {{"z0", matrix_to_json(cfg.z0)},
                       {"z0_prime", matrix_to_json(cfg.z0_prime)},
                       {"pairs", cfg.ergodicity_pairs}};
    return j;
}

void parallel_for(long total, int threads, const std::function<void(long)>& fn) {
    if (threads <= 1 || total <= 1) {
        for (long i = 0; i < total; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    int n_workers = std::min<long>(threads, total);
    pool.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&]() {
            for (long i = next.fetch_add(1); i < total; i = next.fetch_add(1))
                fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// identities
// ---------------------------------------------------------------------------

ExperimentReport run_identities(const ExperimentConfig& cfg) {
    ExperimentReport report;
    RngStream rng = RngStream::derive(cfg.master_seed, {kTagIdentities});
    const std::vector<Eigen::Index> dims = {1, 2, 5, 10};

    // Gain identities on random models, 200 per dimension pair.
    double worst_gain = 0.0;
    for (Eigen::Index d : dims) {
        for (Eigen::Index p : dims) {
            double worst = 0.0;
            for (int trial = 0; trial < 200; ++trial) {
                Eigen::MatrixXd sigma0 = random_spd(d, rng);
                Eigen::MatrixXd gamma0 = random_spd(p, rng);
                Eigen::MatrixXd h = random_matrix(p, d, rng);
                double sigma = 0.5 + rng.uniform(), gamma = 0.5 + rng.uniform();
                ModelSpec model(BoundedSineMap{1.0, Eigen::MatrixXd::Identity(d, d)},
                                h, SpdMatrix(sigma0), SpdMatrix(gamma0), sigma,
                                gamma);
                GaussianStructures g = compute_structures(model);
                const Eigen::MatrixXd& S = model.Sigma().entries();
                const Eigen::MatrixXd& G = model.Gamma().entries();

                worst = std::max(worst,
                                 rel_residual(g.C.entries(), g.IminusKH * S));
                worst = std::max(
                    worst, rel_residual(g.C.inverse(),
                                        model.Sigma().inverse() +
                                            h.transpose() * model.Gamma().solve(h)));
                worst = std::max(worst,
                                 rel_residual(g.S.entries(), h * S * h.transpose() + G));
                worst = std::max(
                    worst, rel_residual(g.K * g.S.entries(), S * h.transpose()));
                // Independent Woodbury route for C.
                Eigen::MatrixXd s_dense = h * S * h.transpose() + G;
                Eigen::MatrixXd c_smw =
                    S - S * h.transpose() *
                            s_dense.fullPivLu().solve((h * S).eval());
                worst = std::max(worst, rel_residual(g.C.entries(), c_smw));
            }
            report.add({"identities", "gain", d * 1000 + p, 0.0, 0, 0,
                        "max_gain_identity_residual_d" + std::to_string(d) + "_p" +
                            std::to_string(p),
                        worst});
            worst_gain = std::max(worst_gain, worst);
        }
    }
    report.criterion("identities_gain_residual_lt_1e-9", worst_gain < 1e-9,
                     worst_gain);

    // Two-form transition-kernel constancy, 20 random models x 100 triples.
    double worst_stddev = 0.0;
    for (int m = 0; m < 20; ++m) {
        Eigen::Index d = dims[m % dims.size()];
        Eigen::Index p = dims[(m / 2) % dims.size()];
        ModelSpec model(BoundedSineMap{1.0 + rng.uniform(), random_matrix(d, d, rng)},
                        random_matrix(p, d, rng), SpdMatrix(random_spd(d, rng)),
                        SpdMatrix(random_spd(p, rng)), 0.5 + rng.uniform(),
                        0.5 + rng.uniform());
        GaussianStructures g = compute_structures(model);
        std::vector<double> diffs;
        diffs.reserve(100);
        for (int t = 0; t < 100; ++t) {
            auto [f1, f2] = transition_logdensity_two_forms(
                g, model, rng.normals(d), rng.normals(d), rng.normals(p));
            diffs.push_back(f1 - f2);
        }
        double mean = 0.0;
        for (double v : diffs) mean += v;
        mean /= diffs.size();
        double var = 0.0;
        for (double v : diffs) var += (v - mean) * (v - mean);
        double sd = std::sqrt(var / diffs.size());
        report.add({"identities", "two_form", m, 0.0, 0, 0,
                    "logdensity_offset_stddev", sd});
        worst_stddev = std::max(worst_stddev, sd);
    }
    report.criterion("identities_two_form_stddev_lt_1e-8", worst_stddev < 1e-8,
                     worst_stddev);

    // Gamma-scaling structure at fixed r: K invariant, S and C scale by gamma^2.
    double worst_k = 0.0, worst_scale = 0.0;
    for (int m = 0; m < 20; ++m) {
        Eigen::Index d = dims[m % dims.size()];
        Eigen::Index p = dims[(m / 3) % dims.size()];
        ExperimentConfig mc;
        mc.map = BoundedSineMap{1.0, Eigen::MatrixXd::Identity(d, d)};
        mc.H = random_matrix(p, d, rng);
        mc.Sigma0 = random_spd(d, rng);
        mc.Gamma0 = random_spd(p, rng);
        mc.r = 0.3 + rng.uniform();
        GaussianStructures g1 = compute_structures(make_model(mc, 1.0));
        GaussianStructures g2 = compute_structures(make_model(mc, 0.01));
        double k_diff = (g1.K - g2.K).cwiseAbs().maxCoeff() /
                        std::max(1.0, g1.K.cwiseAbs().maxCoeff());
        double s_scale = rel_residual(g2.S.entries(), 1e-4 * g1.S.entries());
        double c_scale = rel_residual(g2.C.entries(), 1e-4 * g1.C.entries());
        worst_k = std::max(worst_k, k_diff);
        worst_scale = std::max(worst_scale, std::max(s_scale, c_scale));
    }
    report.add({"identities", "gamma_scaling", 0, 0.0, 0, 0,
                "max_gain_invariance_residual", worst_k});
    report.add({"identities", "gamma_scaling", 0, 0.0, 0, 0,
                "max_cov_scaling_residual", worst_scale});
    report.criterion("identities_gamma_scaling_K_lt_1e-10", worst_k < 1e-10,
                     worst_k);
    report.criterion("identities_gamma_scaling_SC_lt_1e-9", worst_scale < 1e-9,
                     worst_scale);

    // GOPF form equivalence: shared draws, bit-identical trajectories.
    {
        ExperimentConfig mc = default_config("ergodicity", cfg.master_seed);
        mc.truth_steps = 100;
        ModelSpec model = make_model(mc, mc.gamma);
        GaussianStructures g = compute_structures(model);
        double worst = 0.0;
        for (std::uint64_t s = 1; s <= 20; ++s) {
            TruthRun truth = make_truth(mc, model, s);
            std::uint64_t seed = RngStream::derive(cfg.master_seed, {kTagFilter, s}).key();
            FilterRun r1 = run_filter(FilterVariant::Gopf1, model, g, truth, 64,
                                      seed, mc.mu0, nullptr, 100);
            FilterRun r2 = run_filter(FilterVariant::Gopf2, model, g, truth, 64,
                                      seed, mc.mu0, nullptr, 100);
            for (std::size_t k = 0; k < r1.ensembles.size(); ++k)
                for (int n = 0; n < 64; ++n)
                    worst = std::max(
                        worst, (r1.ensembles[k].particles[n] -
                                r2.ensembles[k].particles[n]).cwiseAbs().maxCoeff());
        }
        report.add({"identities", "gopf_forms", 64, 0.0, 0, 0,
                    "max_pathwise_difference", worst});
        report.criterion("identities_gopf_forms_bit_identical", worst == 0.0,
                         worst);
    }

    // SIR reductions: transition proposal == BPF, optimal proposal == OPF.
    {
        ExperimentConfig mc = default_config("ergodicity", cfg.master_seed);
        ModelSpec model = make_model(mc, mc.gamma);
        GaussianStructures g = compute_structures(model);
        TruthRun truth = make_truth(mc, model, 3);
        std::uint64_t seed = RngStream::derive(cfg.master_seed, {kTagFilter, 77}).key();
        Proposal trans = transition_proposal(model);
        Proposal opt = optimal_proposal(model, g);

        FilterRun bpf = run_filter(FilterVariant::Bpf, model, g, truth, 64, seed,
                                   mc.mu0, nullptr, 50);
        FilterRun sir_t = run_filter(FilterVariant::Sir, model, g, truth, 64, seed,
                                     mc.mu0, &trans, 50);
        FilterRun opf = run_filter(FilterVariant::Opf, model, g, truth, 64, seed,
                                   mc.mu0, nullptr, 50);
        FilterRun sir_o = run_filter(FilterVariant::Sir, model, g, truth, 64, seed,
                                     mc.mu0, &opt, 50);

        double worst_b = 0.0, worst_o = 0.0;
        for (std::size_t k = 0; k < bpf.weighted.size(); ++k)
            for (int n = 0; n < 64; ++n) {
                worst_b = std::max(worst_b,
                                   std::abs(bpf.weighted[k].weights.norm[n] -
                                            sir_t.weighted[k].weights.norm[n]));
                worst_o = std::max(worst_o,
                                   std::abs(opf.weighted[k].weights.norm[n] -
                                            sir_o.weighted[k].weights.norm[n]));
            }
        report.add({"identities", "sir_vs_bpf", 64, 0.0, 0, 0,
                    "max_normalized_weight_difference", worst_b});
        report.add({"identities", "sir_vs_opf", 64, 0.0, 0, 0,
                    "max_normalized_weight_difference", worst_o});
        report.criterion("identities_sir_reduces_to_bpf_lt_1e-9", worst_b < 1e-9,
                         worst_b);
        report.criterion("identities_sir_reduces_to_opf_lt_1e-9", worst_o < 1e-9,
                         worst_o);
    }

    // Resampled measure equals the sampling operator applied to the
    // weighted measure with the same uniforms.
    {
        ExperimentConfig mc = default_config("ergodicity", cfg.master_seed);
        ModelSpec model = make_model(mc, mc.gamma);
        GaussianStructures g = compute_structures(model);
        TruthRun truth = make_truth(mc, model, 9);
        Ensemble ens{{}, WeightVector::equal(32), 0};
        RngStream init = RngStream::derive(cfg.master_seed, {kTagIdentities, 5});
        for (int n = 0; n < 32; ++n) ens.particles.push_back(init.normals(1));
        StepDraws draws = make_step_draws(init.key(), 1, 32, 1);
        StepResult r = bpf_step(model, g, ens, truth.observations[0], draws);
        std::vector<Eigen::VectorXd> via_operator = apply_indices(
            r.weighted.particles, resample_indices(r.weighted.weights, draws.uniforms));
        double worst = 0.0;
        for (int n = 0; n < 32; ++n)
            worst = std::max(worst, (via_operator[n] -
                                     r.resampled.particles[n]).cwiseAbs().maxCoeff());
        report.add({"identities", "resample_identity", 32, 0.0, 0, 0,
                    "max_difference", worst});
        report.criterion("identities_resampled_equals_SN_weighted", worst == 0.0,
                         worst);
    }

    return report;
}

// ---------------------------------------------------------------------------
// consistency
// ---------------------------------------------------------------------------

ExperimentReport run_consistency(const ExperimentConfig& cfg) {
    ExperimentReport report;
    ModelSpec model = make_model(cfg, cfg.gamma);
    GaussianStructures g = compute_structures(model);
    const int K = cfg.truth_steps;
    const int R = cfg.replicates;

    TruthRun truth = make_truth(cfg, model, cfg.truth_seeds.front());

    // Reference posterior means: exact Kalman recursion for linear maps,
    // otherwise a documented brute-force BPF at 100x the largest sweep N.
    std::vector<Eigen::VectorXd> ref_means;
    std::vector<GaussianBelief> beliefs;
    const bool linear = std::holds_alternative<LinearMap>(cfg.map);
    if (linear) {
        FilterRun oracle = run_filter(FilterVariant::KalmanOracle, model, g, truth,
                                      0, 0, cfg.mu0);
        beliefs = oracle.beliefs;
        for (const auto& b : beliefs) ref_means.push_back(b.mean);
    } else if (cfg.self_reference) {
        long n_ref = 100 * *std::max_element(cfg.particle_counts.begin(),
                                             cfg.particle_counts.end());
        std::uint64_t seed = RngStream::derive(cfg.master_seed, {kTagReference}).key();
        FilterRun ref = run_filter(FilterVariant::Bpf, model, g, truth,
                                   static_cast<int>(n_ref), seed, cfg.mu0);
        for (const auto& w : ref.weighted) ref_means.push_back(w.mean());
        ref_means.insert(ref_means.begin(), ref.ensembles.front().mean());
    } else {
        throw std::invalid_argument(
            "run_consistency: the Kalman oracle requires a linear map; either "
            "switch the model to a linear map or use a bounded map with "
            "consistency.self_reference=true (brute-force BPF reference at "
            "100x the largest sweep N)");
    }

    TestFunctionDictionary dict =
        TestFunctionDictionary::make(model.state_dim(), 64, cfg.master_seed);

    // kappa audit accumulators across all OPF runs.
    double min_opf_logw = 0.0;
    double max_y_sq = 0.0;
    double max_hpsi_s_sq = 0.0;
    for (const auto& y : truth.observations)
        max_y_sq = std::max(max_y_sq, y.squaredNorm());

    for (const std::string& variant_name : cfg.variants) {
        FilterVariant variant = variant_from_name(variant_name);
        std::vector<std::pair<double, double>> slope_samples;

        for (std::size_t ni = 0; ni < cfg.particle_counts.size(); ++ni) {
            const long n = cfg.particle_counts[ni];
            std::vector<double> sq_errors(R);
            std::vector<Ensemble> terminal(R);
            std::vector<double> rep_min_logw(R, 0.0);
            std::vector<double> rep_max_hpsi(R, 0.0);
            std::vector<std::vector<double>> step_errors(R);

            parallel_for(R, cfg.threads, [&](long rep) {
                std::uint64_t seed =
                    RngStream::derive(cfg.master_seed,
                                      {kTagFilter, fnv1a(variant_name), ni,
                                       static_cast<std::uint64_t>(rep)})
                        .key();
                FilterRun run = run_filter(variant, model, g, truth,
                                           static_cast<int>(n), seed, cfg.mu0);
                Eigen::VectorXd mean = run_terminal_mean(run, variant);
                sq_errors[rep] = (mean - ref_means[K]).squaredNorm();
                terminal[rep] = run.ensembles.back();

                step_errors[rep].resize(K);
                for (int k = 1; k <= K; ++k) {
                    Eigen::VectorXd mk =
                        variant_has_weighted(variant)
                            ? run.weighted[k - 1].mean()
                            : run.ensembles[k].mean();
                    step_errors[rep][k - 1] = (mk - ref_means[k]).norm();
                }

                if (variant == FilterVariant::Opf) {
                    double mn = 0.0, mh = 0.0;
                    for (int k = 1; k <= K; ++k) {
                        for (double lw : run.log_unnorm_weights[k - 1])
                            mn = std::min(mn, lw);
                        for (const auto& u : run.ensembles[k - 1].particles)
                            mh = std::max(mh,
                                          weighted_norm_sq(
                                              g.S, model.H() * model.apply_psi(u)));
                    }
                    rep_min_logw[rep] = mn;
                    rep_max_hpsi[rep] = mh;
                }
            });

            double mse = 0.0;
            for (double e : sq_errors) mse += e;
            mse /= R;
            double rmse = std::sqrt(mse);
            report.add({"consistency", variant_name, n, cfg.gamma, K,
                        cfg.master_seed, "terminal_rmse_vs_reference", rmse});
            slope_samples.emplace_back(static_cast<double>(n), rmse);

            for (int k = 1; k <= K; ++k)
                report.add({"consistency", variant_name, n, cfg.gamma, k,
                            cfg.master_seed, "step_error_vs_reference_rep0",
                            step_errors[0][k - 1]});

            if (variant == FilterVariant::Opf) {
                for (int rep = 0; rep < R; ++rep) {
                    min_opf_logw = std::min(min_opf_logw, rep_min_logw[rep]);
                    max_hpsi_s_sq = std::max(max_hpsi_s_sq, rep_max_hpsi[rep]);
                }
            }

            // Dictionary distance against the reference posterior at time K,
            // sampled at matching ensemble size (needs enough replicates).
            if (linear && R >= 30) {
                std::vector<Ensemble> ref_ens(R);
                for (int rep = 0; rep < R; ++rep) {
                    RngStream rs = RngStream::derive(
                        cfg.master_seed,
                        {kTagReference, ni, static_cast<std::uint64_t>(rep)});
                    Ensemble e{{}, WeightVector::equal(static_cast<int>(n)), K};
                    GaussianDist post(beliefs[K].mean, beliefs[K].cov);
                    for (long i = 0; i < n; ++i) e.particles.push_back(sample(post, rs));
                    ref_ens[rep] = std::move(e);
                }
                double d_est = estimate_d(terminal, ref_ens, dict);
                report.add({"consistency", variant_name, n, cfg.gamma, K,
                            cfg.master_seed, "estimate_d_vs_oracle_sample", d_est});
            }
        }

        RateFit fit = fit_rate(slope_samples, true);
        report.add({"consistency", variant_name, 0, cfg.gamma, K, cfg.master_seed,
                    "rmse_vs_N_loglog_slope", fit.slope});
        report.add({"consistency", variant_name, 0, cfg.gamma, K, cfg.master_seed,
                    "rmse_vs_N_loglog_r_squared", fit.r_squared});
        report.criterion("consistency_slope_" + variant_name,
                         fit.slope >= -0.65 && fit.slope <= -0.35, fit.slope);
    }

    // Corollary kappa audit over the OPF runs: every unnormalized weight in
    // [kappa, 1/kappa], with log(1/kappa) = max_j |y_j|^2 + sup |H psi|_S^2
    // evaluated over the run's own data.
    bool did_opf = std::find(cfg.variants.begin(), cfg.variants.end(), "opf") !=
                   cfg.variants.end();
    if (did_opf) {
        double log_kappa_inv = max_y_sq + max_hpsi_s_sq;
        report.add({"consistency", "opf", 0, cfg.gamma, K, cfg.master_seed,
                    "kappa_audit_log_kappa_inv", log_kappa_inv});
        report.add({"consistency", "opf", 0, cfg.gamma, K, cfg.master_seed,
                    "kappa_audit_min_log_weight", min_opf_logw});
        report.criterion("consistency_kappa_audit",
                         min_opf_logw >= -log_kappa_inv && 0.0 <= log_kappa_inv,
                         min_opf_logw + log_kappa_inv);
    }

    return report;
}

// ---------------------------------------------------------------------------
// accuracy
// ---------------------------------------------------------------------------

ExperimentReport run_accuracy(const ExperimentConfig& cfg) {
    ExperimentReport report;
    const int K = cfg.truth_steps;
    const int burn = K / 2;

    // K is gamma-invariant at fixed r, so one certificate covers the sweep.
    GaussianStructures g0 =
        compute_structures(make_model(cfg, cfg.gamma_sweep.front()));
    double alpha = sine_contraction_factor(cfg, g0);
    report.add({"accuracy", "certificate", 0, 0.0, 0, cfg.master_seed,
                "contraction_alpha", alpha});
    if (alpha >= 1.0)
        throw std::runtime_error(
            "run_accuracy: contraction certificate failed, alpha = " +
            std::to_string(alpha));

    const long n_particles = cfg.particle_counts.front();

    for (const std::string& variant_name : cfg.variants) {
        FilterVariant variant = variant_from_name(variant_name);
        std::vector<std::pair<double, double>> slope_samples;

        for (std::size_t gi = 0; gi < cfg.gamma_sweep.size(); ++gi) {
            const double gamma = cfg.gamma_sweep[gi];
            ModelSpec model = make_model(cfg, gamma);
            GaussianStructures g = compute_structures(model);

            // 3DVAR is deterministic given the data; one filter seed suffices.
            const std::size_t n_filter_seeds =
                variant == FilterVariant::ThreeDVar ? 1 : cfg.filter_seeds.size();
            const long total =
                static_cast<long>(cfg.truth_seeds.size()) * n_filter_seeds;
            std::vector<double> errs(total);

            parallel_for(total, cfg.threads, [&](long job) {
                std::size_t ts = job / n_filter_seeds;
                std::size_t fs = job % n_filter_seeds;
                TruthRun truth = make_truth(cfg, model, cfg.truth_seeds[ts] +
                                                            1000 * gi);
                std::uint64_t seed =
                    RngStream::derive(cfg.master_seed,
                                      {kTagFilter, fnv1a(variant_name), gi,
                                       cfg.truth_seeds[ts],
                                       cfg.filter_seeds[fs]})
                        .key();
                FilterRun run = run_filter(variant, model, g, truth,
                                           static_cast<int>(n_particles), seed,
                                           cfg.mu0);
                double acc = 0.0;
                for (int k = burn + 1; k <= K; ++k)
                    acc += max_particle_error(run.ensembles[k], truth.states[k]);
                errs[job] = acc / (K - burn);
            });

            double mean_err = 0.0;
            for (double e : errs) mean_err += e;
            mean_err /= total;
            report.add({"accuracy", variant_name, n_particles, gamma, K,
                        cfg.master_seed, "time_avg_max_sq_error", mean_err});
            slope_samples.emplace_back(gamma * gamma, mean_err);
        }

        RateFit fit = fit_rate(slope_samples, true);
        report.add({"accuracy", variant_name, n_particles, 0.0, K,
                    cfg.master_seed, "error_vs_gamma_sq_loglog_slope", fit.slope});
        report.add({"accuracy", variant_name, n_particles, 0.0, K,
                    cfg.master_seed, "error_vs_gamma_sq_loglog_r_squared",
                    fit.r_squared});
        report.criterion("accuracy_slope_" + variant_name,
                         fit.slope >= 0.8 && fit.slope <= 1.2, fit.slope);
    }

    // Sanity row: deterministic truth (r_truth = 0) at the largest gamma.
    {
        ExperimentConfig det = cfg;
        det.truth_r = 0.0;
        double gamma = cfg.gamma_sweep.front();
        ModelSpec model = make_model(cfg, gamma);
        GaussianStructures g = compute_structures(model);
        TruthRun truth = make_truth(det, model, cfg.truth_seeds.front());
        std::uint64_t seed =
            RngStream::derive(cfg.master_seed, {kTagFilter, 0xdead}).key();
        FilterRun run = run_filter(FilterVariant::Opf, model, g, truth,
                                   static_cast<int>(n_particles), seed, cfg.mu0);
        double acc = 0.0;
        for (int k = burn + 1; k <= K; ++k)
            acc += max_particle_error(run.ensembles[k], truth.states[k]);
        report.add({"accuracy", "opf", n_particles, gamma, K, cfg.master_seed,
                    "deterministic_truth_time_avg_max_sq_error", acc / (K - burn)});
    }

    return report;
}

// ---------------------------------------------------------------------------
// ergodicity
// ---------------------------------------------------------------------------

ExperimentReport run_ergodicity(const ExperimentConfig& cfg) {
    ExperimentReport report;
    ModelSpec model = make_model(cfg, cfg.gamma);
    GaussianStructures g = compute_structures(model);
    const int K = cfg.truth_steps;
    const int pairs = cfg.ergodicity_pairs;

    if ((cfg.z0 - cfg.z0_prime).norm() == 0.0) {
        report.summary["warnings"].push_back(
            "ergodicity: identical initializations, trivial experiment");
    }

    double alpha = std::holds_alternative<BoundedSineMap>(cfg.map)
                       ? sine_contraction_factor(cfg, g)
                       : -1.0;
    if (alpha >= 0.0)
        report.add({"ergodicity", "certificate", 0, cfg.gamma, 0, cfg.master_seed,
                    "contraction_alpha", alpha});

    TestFunctionDictionary dict =
        TestFunctionDictionary::make(model.state_dim(), 64, cfg.master_seed);

    for (const std::string& variant_name : cfg.variants) {
        FilterVariant variant = variant_from_name(variant_name);
        const long n = variant == FilterVariant::ThreeDVar
                           ? 1
                           : cfg.particle_counts.front();

        std::vector<std::vector<double>> disc(pairs);
        std::vector<std::vector<Ensemble>> a_ens(K + 1), b_ens(K + 1);
        for (int k = 0; k <= K; ++k) {
            a_ens[k].resize(pairs);
            b_ens[k].resize(pairs);
        }

        parallel_for(pairs, cfg.threads, [&](long rep) {
            TruthRun truth = make_truth(cfg, model,
                                        cfg.truth_seeds.front() + 7919 * rep);
            std::uint64_t seed =
                RngStream::derive(cfg.master_seed,
                                  {kTagPair, fnv1a(variant_name),
                                   static_cast<std::uint64_t>(rep)})
                    .key();
            FilterRun run_a = run_filter(variant, model, g, truth,
                                         static_cast<int>(n), seed,
                                         InitialDist(cfg.z0));
            FilterRun run_b = run_filter(variant, model, g, truth,
                                         static_cast<int>(n), seed,
                                         InitialDist(cfg.z0_prime));
            disc[rep].resize(K + 1);
            for (int k = 0; k <= K; ++k) {
                disc[rep][k] =
                    coupling_discrepancy(run_a.ensembles[k], run_b.ensembles[k]);
                a_ens[k][rep] = run_a.ensembles[k];
                b_ens[k][rep] = run_b.ensembles[k];
            }
        });

        // Mean discrepancy curve and its geometric decay rate.
        std::vector<double> mean_disc(K + 1, 0.0);
        for (int k = 0; k <= K; ++k) {
            for (int rep = 0; rep < pairs; ++rep) mean_disc[k] += disc[rep][k];
            mean_disc[k] /= pairs;
            report.add({"ergodicity", variant_name, n, cfg.gamma, k,
                        cfg.master_seed, "mean_coupling_discrepancy",
                        mean_disc[k]});
        }
        std::vector<std::pair<double, double>> decay_samples;
        for (int k = 1; k <= K; ++k)
            if (mean_disc[k] > 0.0)
                decay_samples.emplace_back(static_cast<double>(k),
                                           std::log(mean_disc[k]));
        RateFit fit = fit_rate(decay_samples, false);
        double rate = std::exp(fit.slope);
        report.add({"ergodicity", variant_name, n, cfg.gamma, K, cfg.master_seed,
                    "coupling_decay_rate", rate});
        report.add({"ergodicity", variant_name, n, cfg.gamma, K, cfg.master_seed,
                    "coupling_decay_r_squared", fit.r_squared});
        report.criterion("ergodicity_decay_" + variant_name,
                         rate < 1.0 && fit.r_squared > 0.9, rate);

        // Dictionary distance between the paired laws at each step;
        // monotone decrease after step 5 in >= 90% of consecutive steps.
        std::vector<double> d_curve(K + 1);
        for (int k = 0; k <= K; ++k) {
            d_curve[k] = estimate_d(a_ens[k], b_ens[k], dict);
            report.add({"ergodicity", variant_name, n, cfg.gamma, k,
                        cfg.master_seed, "estimate_d_between_pair", d_curve[k]});
        }
        int decreasing = 0, total_checks = 0;
        for (int k = 5; k < K; ++k) {
            ++total_checks;
            if (d_curve[k + 1] <= d_curve[k]) ++decreasing;
        }
        double frac = static_cast<double>(decreasing) / total_checks;
        report.add({"ergodicity", variant_name, n, cfg.gamma, K, cfg.master_seed,
                    "estimate_d_monotone_fraction_after_step5", frac});
        report.criterion("ergodicity_d_monotone_" + variant_name, frac >= 0.9,
                         frac);

        // 3DVAR pathwise contraction: per-step factor <= alpha + 0.05.
        if (variant == FilterVariant::ThreeDVar && alpha >= 0.0) {
            double worst_ratio = 0.0;
            for (int rep = 0; rep < pairs; ++rep)
                for (int k = 0; k < K; ++k)
                    if (disc[rep][k] > 1e-12)
                        worst_ratio =
                            std::max(worst_ratio, disc[rep][k + 1] / disc[rep][k]);
            report.add({"ergodicity", variant_name, n, cfg.gamma, K,
                        cfg.master_seed, "max_per_step_contraction_ratio",
                        worst_ratio});
            report.criterion("ergodicity_threedvar_contraction",
                             worst_ratio <= alpha + 0.05, worst_ratio);
        }
    }

    return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    if (cfg.experiment == "identities") return run_identities(cfg);
    if (cfg.experiment == "consistency") return run_consistency(cfg);
    if (cfg.experiment == "accuracy") return run_accuracy(cfg);
    if (cfg.experiment == "ergodicity") return run_ergodicity(cfg);
    throw std::invalid_argument("run_experiment: unknown experiment " +
                                cfg.experiment);
}

ExperimentReport run_all(std::uint64_t seed, int threads,
                         const nlohmann::json* overrides) {
    ExperimentReport report;
    for (const char* name :
         {"identities", "consistency", "accuracy", "ergodicity"}) {
        ExperimentConfig cfg;
        if (overrides && overrides->contains(name)) {
            cfg = config_from_json(overrides->at(name));
        } else {
            cfg = default_config(name, seed);
        }
        cfg.threads = threads;
        report.merge(run_experiment(cfg));
    }
    return report;
}

void emit(const ExperimentReport& report, const std::string& out_dir,
          const nlohmann::json& config_echo) {
    std::filesystem::create_directories(out_dir);

    const std::filesystem::path csv_path =
        std::filesystem::path(out_dir) / "report.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("emit: cannot write " + csv_path.string());
    csv << "experiment,variant,N,gamma,k,seed,metric,value\n";
    for (const ReportRow& row : report.rows) {
        csv << row.experiment << ',' << row.variant << ',' << row.n_particles
            << ',' << format_double(row.gamma) << ',' << row.k << ',' << row.seed
            << ',' << row.metric << ',' << format_double(row.value) << '\n';
    }
    csv.close();

    nlohmann::json summary;
    summary["library_version"] = kLibraryVersion;
    summary["config"] = config_echo;
    summary["config_hash"] = fnv1a(config_echo.dump());
    summary["criteria"] = report.summary.value("criteria", nlohmann::json::object());
    if (report.summary.contains("warnings"))
        summary["warnings"] = report.summary.at("warnings");
    summary["all_pass"] = report.all_pass;

    const std::filesystem::path json_path =
        std::filesystem::path(out_dir) / "summary.json";
    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("emit: cannot write " + json_path.string());
    js << summary.dump(2) << '\n';
}

}  // namespace assim
