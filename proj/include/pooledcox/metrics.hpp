// Inference toolkit: exponential-gamma baseline posterior, Bayesian linear
// regression by Gibbs sampling, polynomial averaging, the rho/delta model
// comparison probabilities, and simulation batch summaries.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pooledcox/simgen.hpp"

namespace pooledcox {

struct BaselinePosterior {
  double shape = 0.0;  // sum(events) + alpha
  double rate = 0.0;   // sum(days) + gamma
  double alpha = 1e-5;
  double gamma = 1e-5;

  double mean() const { return shape / rate; }
  // Central credible interval at the given level.
  std::pair<double, double> credible_interval(double level = 0.95) const;
};

BaselinePosterior baseline_hazard_posterior(const std::vector<int>& events,
                                            const std::vector<double>& days,
                                            double alpha = 1e-5, double gamma = 1e-5);

struct LinRegPriors {
  double coef_precision = 1e-5;  // Normal(0, precision) on every coefficient
  double noise_shape = 4e-2;     // Gamma prior on the noise precision
  double noise_rate = 4e-2;
};

struct LinRegPosterior {
  Eigen::MatrixXd coef_draws;        // n_draws x (degree + 1), intercept first
  std::vector<double> sigma2_draws;  // noise variance draws
  Eigen::VectorXd coef_mean() const { return coef_draws.colwise().mean(); }
};

// Regresses v on a polynomial in h (degree 1 or 2). Semi-conjugate model;
// posterior explored by a seeded Gibbs sampler.
LinRegPosterior bayes_linreg(const std::vector<double>& h, const std::vector<double>& v,
                             const LinRegPriors& priors = {}, int degree = 1,
                             int n_draws = 10000, int burn_in = 1000,
                             std::uint64_t seed = 0x5eedu);

// Exact average of a polynomial (degree <= 2, coefficients low-order first)
// over [q, r].
double poly_average(const std::vector<double>& coeffs, double q, double r);
// One average per posterior draw of the coefficients.
std::vector<double> poly_average_draws(const Eigen::MatrixXd& coef_draws, double q, double r);

// Fraction of index-paired draws with |(X - Y) / R| < ell. Draws where R is
// exactly zero are excluded; more than 1% exclusions is an error.
double rho_stat(const std::vector<double>& x, const std::vector<double>& y,
                const std::vector<double>& r, double ell = 0.05);
double rho_stat(const std::vector<double>& x, const std::vector<double>& y,
                double r, double ell = 0.05);
// Fraction of index-paired draws with |X - Y| < ell.
double delta_stat(const std::vector<double>& x, const std::vector<double>& y,
                  double ell = 0.01);

// One per-dataset group-coefficient estimate, extracted from any model's fit.
struct GroupEstimate {
  double beta = 0.0;
  double se = 0.0;
  bool converged = false;
  bool estimable = false;
};

struct BatchSummary {
  std::string scenario_id;
  std::string model;
  int n_datasets = 0;
  int n_usable = 0;         // estimable and converged; the `n_estimable` CSV column
  int n_non_estimable = 0;
  int n_unconverged = 0;    // estimable but not converged
  double mean_beta = 0.0;
  double rel_bias_pct = 0.0;
  double emp_sd = 0.0;
  double mean_se = 0.0;
  double reject_rate = 0.0;  // Wald p < 0.05 against beta = 0
  bool all_non_estimable = false;
};

BatchSummary summarize_batch(const std::vector<GroupEstimate>& fits, const Scenario& truth,
                             const std::string& model, const std::string& scenario_id);

// Header scenario_id,model,n_estimable,n_unconverged,mean_beta,rel_bias_pct,
// emp_sd,mean_se,reject_rate.
std::string batch_summary_csv_header();
std::string batch_summary_csv_row(const BatchSummary& s);

}  // namespace pooledcox
