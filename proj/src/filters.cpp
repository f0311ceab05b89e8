#include "assim/filters.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace assim {

namespace {

// Stream purpose tags under a run key.
constexpr std::uint64_t kInitDraw = 1;
constexpr std::uint64_t kStepGauss = 2;
constexpr std::uint64_t kStepUniform = 3;
constexpr std::uint64_t kPairGauss = 4;

Eigen::VectorXd weighted_mean(const std::vector<Eigen::VectorXd>& particles,
                              const WeightVector& w) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(particles.front().size());
    for (std::size_t i = 0; i < particles.size(); ++i)
        m += w.norm[i] * particles[i];
    return m;
}

void check_step_inputs(const ModelSpec& model, const Ensemble& ens,
                       const Eigen::VectorXd& y_next, const StepDraws& draws) {
    if (ens.size() == 0) throw std::invalid_argument("filter step: empty ensemble");
    if (y_next.size() != model.obs_dim())
        throw std::invalid_argument("filter step: observation dimension mismatch");
    if (static_cast<int>(draws.uniforms.size()) != ens.size())
        throw std::invalid_argument("filter step: draw count mismatch");
}

}  // namespace

Eigen::VectorXd Ensemble::mean() const {
    return weighted_mean(particles, weights);
}

Eigen::VectorXd WeightedEnsemble::mean() const {
    return weighted_mean(particles, weights);
}

StepDraws make_step_draws(std::uint64_t run_key, int step, int n_particles,
                          Eigen::Index state_dim) {
    StepDraws draws;
    RngStream gauss = RngStream::derive(
        run_key, {kStepGauss, static_cast<std::uint64_t>(step)});
    draws.gaussians.reserve(n_particles);
    for (int n = 0; n < n_particles; ++n)
        draws.gaussians.push_back(gauss.normals(state_dim));

    RngStream unif = RngStream::derive(
        run_key, {kStepUniform, static_cast<std::uint64_t>(step)});
    draws.uniforms.resize(n_particles);
    for (int n = 0; n < n_particles; ++n) draws.uniforms[n] = unif.uniform();

    draws.pair_gaussians = [run_key, step, state_dim](int m, int n) {
        RngStream s = RngStream::derive(
            run_key, {kPairGauss, static_cast<std::uint64_t>(step),
                      static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(n)});
        return s.normals(state_dim);
    };
    return draws;
}

Proposal transition_proposal(const ModelSpec& model) {
    Proposal p;
    p.sample = [&model](const Eigen::VectorXd& u, const Eigen::VectorXd&,
                        const Eigen::VectorXd& z) {
        return (model.apply_psi(u) + model.Sigma().chol() * z).eval();
    };
    p.log_density = [&model](const Eigen::VectorXd& u_next,
                             const Eigen::VectorXd& u, const Eigen::VectorXd&) {
        return gaussian_log_density(model.Sigma(), u_next - model.apply_psi(u));
    };
    return p;
}

Proposal optimal_proposal(const ModelSpec& model, const GaussianStructures& g,
                          double cov_scale) {
    if (cov_scale <= 0.0)
        throw std::invalid_argument("optimal_proposal: cov_scale must be > 0");
    auto cov = std::make_shared<SpdMatrix>(cov_scale * g.C.entries());
    Proposal p;
    p.sample = [&model, &g, cov](const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& z) {
        return (optimal_proposal_mean(g, model, u, y) + cov->chol() * z).eval();
    };
    p.log_density = [&model, &g, cov](const Eigen::VectorXd& u_next,
                                      const Eigen::VectorXd& u,
                                      const Eigen::VectorXd& y) {
        return gaussian_log_density(*cov,
                                    u_next - optimal_proposal_mean(g, model, u, y));
    };
    return p;
}

StepResult bpf_step(const ModelSpec& model, const GaussianStructures&,
                    const Ensemble& ens, const Eigen::VectorXd& y_next,
                    const StepDraws& draws) {
    check_step_inputs(model, ens, y_next, draws);
    const int n = ens.size();

    std::vector<Eigen::VectorXd> proposed(n);
    std::vector<double> log_w(n);
    for (int i = 0; i < n; ++i) {
        proposed[i] =
            model.apply_psi(ens.particles[i]) + model.Sigma().chol() * draws.gaussians[i];
        log_w[i] =
            -0.5 * weighted_norm_sq(model.Gamma(), y_next - model.H() * proposed[i]);
    }

    WeightVector w = normalize_log(log_w, ens.step_index + 1);
    ResampleIndexMap map = resample_indices(w, draws.uniforms);

    StepResult out;
    out.resampled = Ensemble{apply_indices(proposed, map),
                             WeightVector::equal(n), ens.step_index + 1};
    out.weighted = WeightedEnsemble{std::move(proposed), std::move(w)};
    out.log_unnorm_weights = std::move(log_w);
    out.index_map = std::move(map);
    return out;
}

StepResult opf_step(const ModelSpec& model, const GaussianStructures& g,
                    const Ensemble& ens, const Eigen::VectorXd& y_next,
                    const StepDraws& draws) {
    check_step_inputs(model, ens, y_next, draws);
    const int n = ens.size();

    std::vector<Eigen::VectorXd> proposed(n);
    std::vector<double> log_w(n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd psi_u = model.apply_psi(ens.particles[i]);
        proposed[i] =
            g.IminusKH * psi_u + g.K * y_next + g.C.chol() * draws.gaussians[i];
        // Weights depend on the pre-proposal particle only.
        log_w[i] = -0.5 * weighted_norm_sq(g.S, y_next - model.H() * psi_u);
    }

    WeightVector w = normalize_log(log_w, ens.step_index + 1);
    ResampleIndexMap map = resample_indices(w, draws.uniforms);

    StepResult out;
    out.resampled = Ensemble{apply_indices(proposed, map),
                             WeightVector::equal(n), ens.step_index + 1};
    out.weighted = WeightedEnsemble{std::move(proposed), std::move(w)};
    out.log_unnorm_weights = std::move(log_w);
    out.index_map = std::move(map);
    return out;
}

GopfStepResult gopf_step_form1(const ModelSpec& model,
                               const GaussianStructures& g, const Ensemble& ens,
                               const Eigen::VectorXd& y_next,
                               const StepDraws& draws) {
    check_step_inputs(model, ens, y_next, draws);
    if (!draws.pair_gaussians)
        throw std::invalid_argument("gopf_step_form1: pair draws required");
    const int n = ens.size();

    std::vector<double> log_w(n);
    for (int i = 0; i < n; ++i)
        log_w[i] = -0.5 * weighted_norm_sq(
                              g.S, y_next - model.H() * model.apply_psi(ens.particles[i]));

    WeightVector w = normalize_log(log_w, ens.step_index + 1);
    ResampleIndexMap map = resample_indices(w, draws.uniforms);

    std::vector<Eigen::VectorXd> next(n);
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd& survivor = ens.particles[map.indices[i]];
        next[i] = g.IminusKH * model.apply_psi(survivor) + g.K * y_next +
                  g.C.chol() * draws.pair_gaussians(map.indices[i], i);
    }

    GopfStepResult out;
    out.next = Ensemble{std::move(next), WeightVector::equal(n), ens.step_index + 1};
    out.log_unnorm_weights = std::move(log_w);
    out.index_map = std::move(map);
    return out;
}

GopfStepResult gopf_step_form2(const ModelSpec& model,
                               const GaussianStructures& g, const Ensemble& ens,
                               const Eigen::VectorXd& y_next,
                               const StepDraws& draws, bool materialize_all) {
    check_step_inputs(model, ens, y_next, draws);
    if (!draws.pair_gaussians)
        throw std::invalid_argument("gopf_step_form2: pair draws required");
    const int n = ens.size();

    std::vector<double> log_w(n);
    std::vector<Eigen::VectorXd> drift(n);
    for (int m = 0; m < n; ++m) {
        Eigen::VectorXd psi_v = model.apply_psi(ens.particles[m]);
        log_w[m] = -0.5 * weighted_norm_sq(g.S, y_next - model.H() * psi_v);
        drift[m] = g.IminusKH * psi_v + g.K * y_next;
    }

    WeightVector w = normalize_log(log_w, ens.step_index + 1);
    ResampleIndexMap map = resample_indices(w, draws.uniforms);

    std::vector<Eigen::VectorXd> next(n);
    if (materialize_all) {
        // Full N x N array vhat^{(m,n)}; slot n keeps row m*(n).
        std::vector<std::vector<Eigen::VectorXd>> vhat(n);
        for (int m = 0; m < n; ++m) {
            vhat[m].resize(n);
            for (int i = 0; i < n; ++i)
                vhat[m][i] = drift[m] + g.C.chol() * draws.pair_gaussians(m, i);
        }
        for (int i = 0; i < n; ++i) next[i] = vhat[map.indices[i]][i];
    } else {
        for (int i = 0; i < n; ++i) {
            int m = map.indices[i];
            next[i] = drift[m] + g.C.chol() * draws.pair_gaussians(m, i);
        }
    }

    GopfStepResult out;
    out.next = Ensemble{std::move(next), WeightVector::equal(n), ens.step_index + 1};
    out.log_unnorm_weights = std::move(log_w);
    out.index_map = std::move(map);
    return out;
}

StepResult sir_step(const ModelSpec& model, const Proposal& proposal,
                    const Ensemble& ens, const Eigen::VectorXd& y_next,
                    const StepDraws& draws) {
    check_step_inputs(model, ens, y_next, draws);
    const int n = ens.size();

    std::vector<Eigen::VectorXd> proposed(n);
    std::vector<double> log_w(n);
    for (int i = 0; i < n; ++i) {
        proposed[i] = proposal.sample(ens.particles[i], y_next, draws.gaussians[i]);
        double lw =
            gaussian_log_density(model.Gamma(), y_next - model.H() * proposed[i]) +
            gaussian_log_density(model.Sigma(),
                                 proposed[i] - model.apply_psi(ens.particles[i])) -
            proposal.log_density(proposed[i], ens.particles[i], y_next);
        if (!std::isfinite(lw))
            throw std::runtime_error("sir_step: non-finite log-weight for particle " +
                                     std::to_string(i));
        log_w[i] = lw;
    }

    WeightVector w = normalize_log(log_w, ens.step_index + 1);
    ResampleIndexMap map = resample_indices(w, draws.uniforms);

    StepResult out;
    out.resampled = Ensemble{apply_indices(proposed, map),
                             WeightVector::equal(n), ens.step_index + 1};
    out.weighted = WeightedEnsemble{std::move(proposed), std::move(w)};
    out.log_unnorm_weights = std::move(log_w);
    out.index_map = std::move(map);
    return out;
}

FilterRun run_filter(FilterVariant variant, const ModelSpec& model,
                     const GaussianStructures& g, const TruthRun& truth,
                     int n_particles, std::uint64_t seed,
                     const InitialDist& mu0, const Proposal* proposal,
                     int steps) {
    if (steps < 0) steps = truth.steps();
    if (steps > truth.steps())
        throw std::invalid_argument("run_filter: more steps than observations");
    if (variant == FilterVariant::Sir && proposal == nullptr)
        throw std::invalid_argument("run_filter: SIR variant needs a proposal");

    FilterRun run;

    if (variant == FilterVariant::KalmanOracle) {
        const auto* gauss = std::get_if<GaussianDist>(&mu0);
        if (!gauss)
            throw std::invalid_argument(
                "run_filter: Kalman oracle needs a Gaussian initial distribution");
        run.beliefs.push_back(GaussianBelief{gauss->mean, gauss->cov});
        for (int k = 0; k < steps; ++k)
            run.beliefs.push_back(
                kalman_oracle_step(model, run.beliefs.back(), truth.observations[k]));
        return run;
    }

    if (variant == FilterVariant::ThreeDVar) n_particles = 1;
    if (n_particles < 1)
        throw std::invalid_argument("run_filter: need at least one particle");

    // Initial particles in particle order from a dedicated stream.
    std::vector<Eigen::VectorXd> init(n_particles);
    if (const auto* point = std::get_if<Eigen::VectorXd>(&mu0)) {
        for (auto& p : init) p = *point;
    } else {
        RngStream s = RngStream::derive(seed, {kInitDraw});
        const auto& gauss = std::get<GaussianDist>(mu0);
        for (auto& p : init) p = sample(gauss, s);
    }
    run.ensembles.push_back(
        Ensemble{std::move(init), WeightVector::equal(n_particles), 0});

    for (int k = 1; k <= steps; ++k) {
        const Eigen::VectorXd& y = truth.observations[k - 1];
        const Ensemble& cur = run.ensembles.back();

        if (variant == FilterVariant::ThreeDVar) {
            Eigen::VectorXd m = threedvar_step(g, model, cur.particles[0], y);
            run.ensembles.push_back(
                Ensemble{{std::move(m)}, WeightVector::equal(1), k});
            continue;
        }

        StepDraws draws = make_step_draws(seed, k, n_particles, model.state_dim());
        try {
            switch (variant) {
                case FilterVariant::Bpf: {
                    StepResult r = bpf_step(model, g, cur, y, draws);
                    run.ensembles.push_back(std::move(r.resampled));
                    run.weighted.push_back(std::move(r.weighted));
                    run.log_unnorm_weights.push_back(std::move(r.log_unnorm_weights));
                    break;
                }
                case FilterVariant::Opf: {
                    StepResult r = opf_step(model, g, cur, y, draws);
                    run.ensembles.push_back(std::move(r.resampled));
                    run.weighted.push_back(std::move(r.weighted));
                    run.log_unnorm_weights.push_back(std::move(r.log_unnorm_weights));
                    break;
                }
                case FilterVariant::Gopf1: {
                    GopfStepResult r = gopf_step_form1(model, g, cur, y, draws);
                    run.ensembles.push_back(std::move(r.next));
                    run.log_unnorm_weights.push_back(std::move(r.log_unnorm_weights));
                    break;
                }
                case FilterVariant::Gopf2: {
                    GopfStepResult r = gopf_step_form2(model, g, cur, y, draws);
                    run.ensembles.push_back(std::move(r.next));
                    run.log_unnorm_weights.push_back(std::move(r.log_unnorm_weights));
                    break;
                }
                case FilterVariant::Sir: {
                    StepResult r = sir_step(model, *proposal, cur, y, draws);
                    run.ensembles.push_back(std::move(r.resampled));
                    run.weighted.push_back(std::move(r.weighted));
                    run.log_unnorm_weights.push_back(std::move(r.log_unnorm_weights));
                    break;
                }
                default:
                    throw std::logic_error("run_filter: unreachable variant");
            }
        } catch (const DegenerateWeightsError&) {
            throw;
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("run_filter: step " + std::to_string(k) + ": " +
                                     e.what());
        }
    }
    return run;
}

}  // namespace assim
