#include "pooledcox/coxfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace pooledcox {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Conditional variance of column j given already-kept columns, relative to
// its own variance; exact linear dependence shows up as ~1e-15.
constexpr double kAliasTol = 1e-8;
// Absolute floor below which a column simply has no variation in any risk set.
constexpr double kZeroInfoTol = 1e-12;

std::vector<int> aliased_from_gram(const Eigen::MatrixXd& gram) {
  const int k = static_cast<int>(gram.cols());
  std::vector<int> kept, aliased;
  for (int j = 0; j < k; ++j) {
    const double gjj = gram(j, j);
    if (gjj < kZeroInfoTol) {
      aliased.push_back(j);
      continue;
    }
    double cond = gjj;
    if (!kept.empty()) {
      const int m = static_cast<int>(kept.size());
      Eigen::MatrixXd gkk(m, m);
      Eigen::VectorXd gkj(m);
      for (int a = 0; a < m; ++a) {
        gkj(a) = gram(kept[a], j);
        for (int b = 0; b < m; ++b) gkk(a, b) = gram(kept[a], kept[b]);
      }
      cond = gjj - gkj.dot(gkk.ldlt().solve(gkj));
    }
    if (cond < kAliasTol * gjj)
      aliased.push_back(j);
    else
      kept.push_back(j);
  }
  return aliased;
}

}  // namespace

int design_columns(const PooledDataset& data, const DesignSpec& design) {
  const int n_cov =
      data.subjects.empty() ? 1 : static_cast<int>(data.subjects.front().covariates.size());
  if (design.mode == DesignMode::fixed_effect) return n_cov + (design.n_trials - 1);
  return n_cov;
}

CoxProblem build_problem(const PooledDataset& data, const DesignSpec& design) {
  const int n = static_cast<int>(data.subjects.size());
  const int k = design_columns(data, design);
  const int n_cov = design.mode == DesignMode::fixed_effect ? k - (design.n_trials - 1) : k;

  CoxProblem prob;
  prob.X = Eigen::MatrixXd::Zero(n, k);
  prob.time.resize(n);
  prob.event.resize(n);
  std::vector<int> stratum(n, 0);
  for (int i = 0; i < n; ++i) {
    const Subject& s = data.subjects[i];
    if (static_cast<int>(s.covariates.size()) != n_cov)
      throw std::invalid_argument("build_problem: covariate length mismatch");
    for (int c = 0; c < n_cov; ++c) prob.X(i, c) = s.covariates[c];
    if (design.mode == DesignMode::fixed_effect && s.trial_id >= 1)
      prob.X(i, n_cov + s.trial_id - 1) = 1.0;  // reference level = trial 0
    prob.time[i] = s.time;
    prob.event[i] = s.event ? 1 : 0;
    if (design.mode == DesignMode::stratified) stratum[i] = s.trial_id;
  }
  index_strata(prob, stratum,
               design.mode == DesignMode::stratified ? data.n_trials : 1);
  return prob;
}

double log_partial_likelihood(const PooledDataset& data, const DesignSpec& design,
                              const Eigen::VectorXd& beta) {
  return cox_eval(build_problem(data, design), beta, design.ties, 0).loglik;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> score_and_information(
    const PooledDataset& data, const DesignSpec& design, const Eigen::VectorXd& beta) {
  CoxEval ev = cox_eval(build_problem(data, design), beta, design.ties, 2);
  return {std::move(ev.grad), std::move(ev.info)};
}

std::vector<int> detect_aliasing(const PooledDataset& data, const DesignSpec& design) {
  const CoxProblem prob = build_problem(data, design);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(prob.n_columns());
  return aliased_from_gram(cox_eval(prob, zero, design.ties, 2).info);
}

FitResult newton_fit(const PooledDataset& data, const DesignSpec& design,
                     const FitOptions& options) {
  const CoxProblem prob = build_problem(data, design);
  const int k = prob.n_columns();

  FitResult fit;
  fit.beta = Eigen::VectorXd::Constant(k, kNaN);
  fit.std_err = Eigen::VectorXd::Constant(k, kNaN);
  fit.estimable.assign(k, false);

  const Eigen::VectorXd zero_full = Eigen::VectorXd::Zero(k);
  fit.dropped_aliased =
      aliased_from_gram(cox_eval(prob, zero_full, design.ties, 2).info);

  std::vector<int> kept;
  for (int j = 0; j < k; ++j)
    if (std::find(fit.dropped_aliased.begin(), fit.dropped_aliased.end(), j) ==
        fit.dropped_aliased.end())
      kept.push_back(j);

  CoxProblem red = prob;
  red.X.resize(prob.X.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) red.X.col(c) = prob.X.col(kept[c]);

  const int kr = static_cast<int>(kept.size());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(kr);
  CoxEval ev = cox_eval(red, beta, design.ties, 2);
  bool runaway = false;
  std::vector<bool> runaway_col(kr, false);

  int iter = 0;
  if (kr > 0) {
    for (; iter < options.max_iter; ++iter) {
      if (ev.grad.cwiseAbs().maxCoeff() <= options.tol) {
        fit.converged = true;
        break;
      }
      Eigen::VectorXd delta = ev.info.ldlt().solve(ev.grad);
      if (!delta.allFinite()) break;
      // Steps within evaluation noise still count as accepted so the final
      // gradient polish is not cut short.
      const double slack = 1e-11 * (1.0 + std::abs(ev.loglik));
      double step = 1.0;
      bool accepted = false;
      for (int h = 0; h <= options.max_step_halvings; ++h) {
        const Eigen::VectorXd cand = beta + step * delta;
        const CoxEval cand_ev = cox_eval(red, cand, design.ties, 2);
        if (std::isfinite(cand_ev.loglik) && cand_ev.loglik > ev.loglik - slack) {
          const double gain = cand_ev.loglik - ev.loglik;
          beta = cand;
          ev = cand_ev;
          accepted = true;
          if (std::abs(gain) <= options.loglik_tol) fit.converged = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      for (int j = 0; j < kr; ++j) {
        if (std::abs(beta(j)) > options.runaway_bound) {
          runaway = true;
          runaway_col[j] = true;
        }
      }
      if (runaway || fit.converged) {
        if (runaway) fit.converged = false;
        ++iter;
        break;
      }
    }
  } else {
    fit.converged = true;  // nothing to estimate
  }

  fit.iterations = iter;
  fit.loglik = ev.loglik;

  // Model-based variances from the inverse observed information, restricted to
  // columns that still carry curvature at the optimum.
  std::vector<int> est_cols;
  for (int j = 0; j < kr; ++j) {
    fit.beta(kept[j]) = beta(j);
    if (!runaway_col[j] && ev.info(j, j) >= kZeroInfoTol) est_cols.push_back(j);
  }
  if (!est_cols.empty()) {
    const int m = static_cast<int>(est_cols.size());
    Eigen::MatrixXd sub(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) sub(a, b) = ev.info(est_cols[a], est_cols[b]);
    const Eigen::MatrixXd cov = sub.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
    for (int a = 0; a < m; ++a) {
      const double var = cov(a, a);
      if (var > 0.0 && std::isfinite(var)) {
        fit.std_err(kept[est_cols[a]]) = std::sqrt(var);
        fit.estimable[kept[est_cols[a]]] = true;
      }
    }
  }
  return fit;
}

double normal_two_sided_p(double z) {
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

WaldTest wald_test(const FitResult& fit, int column, double null_value) {
  if (column < 0 || column >= static_cast<int>(fit.estimable.size()) ||
      !fit.estimable[column])
    throw std::invalid_argument("wald_test: column is not estimable");
  WaldTest w;
  w.z = (fit.beta(column) - null_value) / fit.std_err(column);
  w.p_value = normal_two_sided_p(w.z);
  return w;
}

std::vector<StepFunction> breslow_baseline(const FitResult& fit,
                                           const PooledDataset& data,
                                           const DesignSpec& design) {
  const CoxProblem prob = build_problem(data, design);
  Eigen::VectorXd beta = fit.beta;
  for (int j = 0; j < beta.size(); ++j)
    if (!std::isfinite(beta(j))) beta(j) = 0.0;  // dropped columns contribute nothing

  std::vector<StepFunction> out(prob.stratum_order.size());
  for (std::size_t s = 0; s < prob.stratum_order.size(); ++s) {
    const auto& ord = prob.stratum_order[s];  // descending time
    const int m = static_cast<int>(ord.size());
    double s0 = 0.0;
    std::vector<std::pair<double, double>> steps;  // (time, increment)
    int i = 0;
    while (i < m) {
      const double t = prob.time[ord[i]];
      int d = 0;
      for (; i < m && prob.time[ord[i]] == t; ++i) {
        s0 += std::exp(prob.X.row(ord[i]) * beta);
        if (prob.event[ord[i]]) ++d;
      }
      if (d > 0) steps.push_back({t, d / s0});
    }
    std::reverse(steps.begin(), steps.end());
    double cum = 0.0;
    for (const auto& [t, inc] : steps) {
      cum += inc;
      out[s].time.push_back(t);
      out[s].value.push_back(cum);
    }
  }
  return out;
}

std::string fit_to_json(const FitResult& fit, const std::string& model) {
  nlohmann::json j;
  j["model"] = model;
  j["beta"] = std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size());
  j["se"] = std::vector<double>(fit.std_err.data(), fit.std_err.data() + fit.std_err.size());
  j["loglik"] = fit.loglik;
  j["converged"] = fit.converged;
  j["estimable"] = fit.estimable;
  j["dropped"] = fit.dropped_aliased;
  return j.dump();
}

}  // namespace pooledcox
