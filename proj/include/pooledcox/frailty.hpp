// Random-effects Cox models with a trial-level frailty: gamma or log-normal,
// fitted by penalized partial likelihood with an outer search over the
// frailty variance.
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pooledcox/coxfit.hpp"
#include "pooledcox/dataset.hpp"

namespace pooledcox {

enum class FrailtyDist { gamma, log_normal };

struct FrailtySpec {
  FrailtyDist distribution = FrailtyDist::log_normal;
  double theta = 0.0;  // variance of the random effect; 0 means no frailty
};

// Random effects live on the log scale: b_s = ln(phi_s). The gamma penalty
// (1/theta) * sum(b - e^b + 1) is the mean-one gamma log-density in b, shifted
// so it vanishes at b = 0; the log-normal penalty is -(1/(2 theta)) * sum(b^2).
double penalty_value(const FrailtySpec& spec, const std::vector<double>& b);

double penalized_loglik(const PooledDataset& data, double beta,
                        const std::vector<double>& b, const FrailtySpec& spec);

struct PenalizedEval {
  double loglik = 0.0;       // penalized value
  Eigen::VectorXd grad;      // d/d(beta, b)
  Eigen::MatrixXd info;      // penalized observed information
};
PenalizedEval penalized_eval(const PooledDataset& data, double beta,
                             const std::vector<double>& b, const FrailtySpec& spec);

struct InnerFit {
  double beta = 0.0;
  std::vector<double> b;
  bool beta_estimable = true;  // false when the group column has no variation
  bool converged = false;
  int iterations = 0;
  double penalized_loglik = 0.0;
  Eigen::MatrixXd info;  // penalized information at the optimum, (beta, b) order
};
InnerFit inner_fit(const PooledDataset& data, const FrailtySpec& spec,
                   const FitOptions& options = {});

struct FrailtyFit {
  FrailtyDist distribution = FrailtyDist::log_normal;
  double beta = 0.0;
  double std_err = 0.0;
  double theta_hat = 0.0;
  std::vector<double> b;
  int inner_iterations = 0;   // total across outer evaluations
  int outer_iterations = 0;   // marginal-likelihood evaluations
  bool converged = false;
  bool estimable = true;
  bool no_frailty = false;    // theta_hat stuck at the lower boundary
  double marginal_loglik = 0.0;
  double penalized_loglik = 0.0;
};

inline constexpr double kThetaMin = 1e-8;
inline constexpr double kThetaMax = 100.0;

// Approximate marginal log-likelihood at fixed theta: exact integrated-gamma
// correction for the gamma frailty, Laplace approximation for the log-normal.
double marginal_loglik_at(const PooledDataset& data, FrailtyDist dist, double theta,
                          const FitOptions& options, InnerFit* fit_out = nullptr);

FrailtyFit fit_frailty(const PooledDataset& data, FrailtyDist dist,
                       const FitOptions& options = {});

// FitResult-style JSON extended with theta_hat, b, marginal_loglik, distribution.
std::string frailty_to_json(const FrailtyFit& fit, const std::string& model);

}  // namespace pooledcox
