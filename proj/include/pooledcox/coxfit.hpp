// Maximum partial likelihood Cox fitting: unadjusted, stratified by trial,
// and trial-as-fixed-effect designs with Wald inference, aliasing detection,
// and the Breslow baseline estimator.
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pooledcox/cox_core.hpp"
#include "pooledcox/dataset.hpp"

namespace pooledcox {

enum class DesignMode { unadjusted, stratified, fixed_effect };

struct DesignSpec {
  DesignMode mode = DesignMode::unadjusted;
  TieMethod ties = TieMethod::breslow;
  int n_trials = 1;  // used by fixed_effect for the indicator columns
};

// Subject covariates first (group column at index 0), then T-1 trial
// indicators (reference = trial 0) in fixed-effect mode.
int design_columns(const PooledDataset& data, const DesignSpec& design);
CoxProblem build_problem(const PooledDataset& data, const DesignSpec& design);

struct FitOptions {
  double tol = 1e-9;        // gradient max-norm
  int max_iter = 50;
  int max_step_halvings = 30;
  double loglik_tol = 1e-12;
  double runaway_bound = 500.0;
};

// Nondecreasing step function: value[i] applies from time[i] onward.
struct StepFunction {
  std::vector<double> time;
  std::vector<double> value;
};

struct FitResult {
  Eigen::VectorXd beta;            // NaN for dropped columns
  Eigen::VectorXd std_err;         // NaN where non-estimable
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<bool> estimable;
  std::vector<int> dropped_aliased;
  std::vector<StepFunction> baseline_cumhaz;  // filled on request
};

double log_partial_likelihood(const PooledDataset& data, const DesignSpec& design,
                              const Eigen::VectorXd& beta);

// Exact analytic first and second derivatives of the partial log-likelihood.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> score_and_information(
    const PooledDataset& data, const DesignSpec& design, const Eigen::VectorXd& beta);

// Columns whose removal restores full rank of the risk-set-centered design.
// Scanned so that low-index columns (the group column) survive when possible.
std::vector<int> detect_aliasing(const PooledDataset& data, const DesignSpec& design);

FitResult newton_fit(const PooledDataset& data, const DesignSpec& design,
                     const FitOptions& options = {});

struct WaldTest {
  double z = 0.0;
  double p_value = 1.0;
};
WaldTest wald_test(const FitResult& fit, int column, double null_value = 0.0);

// Two-sided p from the standard normal.
double normal_two_sided_p(double z);

std::vector<StepFunction> breslow_baseline(const FitResult& fit,
                                           const PooledDataset& data,
                                           const DesignSpec& design);

// JSON record with fields model, beta, se, loglik, converged, estimable, dropped.
std::string fit_to_json(const FitResult& fit, const std::string& model);

}  // namespace pooledcox
