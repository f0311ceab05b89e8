#ifndef ASSIM_METRICS_HPP
#define ASSIM_METRICS_HPP

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "assim/filters.hpp"
#include "assim/gaussian.hpp"

namespace assim {

/// Fixed dictionary of bounded test functions: seeded tanh ridge functions
/// tanh(<a_i, x> + b_i) plus the coordinate clamps clamp(x_j, -1, 1). The
/// sup over all |f| <= 1 in the randomized measure metric is approximated
/// from below over this dictionary.
class TestFunctionDictionary {
public:
    struct Ridge {
        Eigen::VectorXd direction;
        double offset;
    };

    static TestFunctionDictionary make(Eigen::Index state_dim, int n_ridges,
                                       std::uint64_t seed);

    int size() const { return static_cast<int>(ridges_.size()) + static_cast<int>(dim_); }
    Eigen::Index state_dim() const { return dim_; }

    double eval(int i, const Eigen::VectorXd& x) const;

    /// mu(f_i) under a weighted empirical measure.
    double empirical_mean(int i, const std::vector<Eigen::VectorXd>& particles,
                          const WeightVector& weights) const;

private:
    Eigen::Index dim_ = 0;
    std::vector<Ridge> ridges_;
};

/// Least-squares fit; in log_log mode the fit is on (log x, log y).
struct RateFit {
    std::vector<std::pair<double, double>> samples;  // as fitted
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

RateFit fit_rate(const std::vector<std::pair<double, double>>& samples,
                 bool log_log);

/// max_n ||u^(n) - u_dagger||^2 (Euclidean).
double max_particle_error(const Ensemble& ens, const Eigen::VectorXd& u_dagger);

/// ||mean - u_dagger||^2 for the (weighted) ensemble mean.
double mean_error(const Ensemble& ens, const Eigen::VectorXd& u_dagger);
double mean_error(const WeightedEnsemble& ens, const Eigen::VectorXd& u_dagger);

/// Dictionary estimate of d(mu, nu) = sup_f sqrt(E |mu(f) - nu(f)|^2) over
/// R paired independent replicates. A lower bound on d by construction.
double estimate_d(const std::vector<Ensemble>& a_runs,
                  const std::vector<Ensemble>& b_runs,
                  const TestFunctionDictionary& dict);

/// Same, against a fixed measure given by its dictionary means nu(f_i).
double estimate_d(const std::vector<Ensemble>& a_runs,
                  const std::vector<double>& fixed_means,
                  const TestFunctionDictionary& dict);

/// nu(f_i) for a Gaussian nu: quadrature in one dimension, Monte Carlo
/// otherwise (mc_samples draws).
std::vector<double> gaussian_dictionary_means(const TestFunctionDictionary& dict,
                                              const GaussianDist& nu,
                                              long mc_samples = 1000000,
                                              std::uint64_t seed = 0x6d1c7e);

/// Index-matched pathwise discrepancy max_n ||uA^(n) - uB^(n)|| for ensembles
/// evolved under common random numbers. A surrogate for distributional
/// distance; positions are matched by particle slot.
double coupling_discrepancy(const Ensemble& a, const Ensemble& b);

}  // namespace assim

#endif
