// Low-level partial-likelihood evaluator shared by the plain Cox fitters and
// the penalized frailty fitters: one pass over each stratum in descending
// time order, accumulating risk sums for the value, score, and information.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace pooledcox {

enum class TieMethod { breslow, efron };

// Design-agnostic view of a survival problem. `X` holds one row per subject;
// strata partition subjects and each stratum keeps its own descending-time
// order (ties broken by ascending subject id).
struct CoxProblem {
  Eigen::MatrixXd X;
  std::vector<double> time;
  std::vector<std::uint8_t> event;
  std::vector<std::vector<int>> stratum_order;

  int n_subjects() const { return static_cast<int>(time.size()); }
  int n_columns() const { return static_cast<int>(X.cols()); }
};

// Fills stratum_order from a per-subject stratum label (values in [0, n_strata)).
void index_strata(CoxProblem& prob, const std::vector<int>& stratum, int n_strata);

struct CoxEval {
  double loglik = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;  // observed information (negated Hessian)
};

// derivatives = 0 computes the value only; 2 adds score and information.
CoxEval cox_eval(const CoxProblem& prob, const Eigen::VectorXd& beta,
                 TieMethod ties, int derivatives);

}  // namespace pooledcox
