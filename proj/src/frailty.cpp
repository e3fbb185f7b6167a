#include "pooledcox/frailty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace pooledcox {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZeroInfoTol = 1e-12;

// Augmented design: subject covariate (group) in column 0, then one indicator
// per trial carrying the log-frailty b_s. Single stratum; the overall level of
// b is confounded with the baseline hazard, which the penalty pins down.
CoxProblem build_augmented(const PooledDataset& data) {
  const int n = static_cast<int>(data.subjects.size());
  const int T = data.n_trials;
  CoxProblem prob;
  prob.X = Eigen::MatrixXd::Zero(n, 1 + T);
  prob.time.resize(n);
  prob.event.resize(n);
  for (int i = 0; i < n; ++i) {
    const Subject& s = data.subjects[i];
    if (s.covariates.size() != 1)
      throw std::invalid_argument("frailty fit requires exactly one covariate");
    prob.X(i, 0) = s.covariates[0];
    prob.X(i, 1 + s.trial_id) = 1.0;
    prob.time[i] = s.time;
    prob.event[i] = s.event ? 1 : 0;
  }
  index_strata(prob, std::vector<int>(n, 0), 1);
  return prob;
}

Eigen::VectorXd pack(double beta, const std::vector<double>& b) {
  Eigen::VectorXd psi(1 + b.size());
  psi(0) = beta;
  for (std::size_t s = 0; s < b.size(); ++s) psi(1 + s) = b[s];
  return psi;
}

void add_penalty(const FrailtySpec& spec, const Eigen::VectorXd& psi,
                 double* value, Eigen::VectorXd* grad, Eigen::MatrixXd* info) {
  const double inv_theta = 1.0 / spec.theta;
  const int T = static_cast<int>(psi.size()) - 1;
  for (int s = 0; s < T; ++s) {
    const double b = psi(1 + s);
    if (spec.distribution == FrailtyDist::gamma) {
      const double ebm1 = std::expm1(b);  // keeps 1 - e^b accurate near b = 0
      *value += inv_theta * (b - ebm1);
      if (grad) (*grad)(1 + s) -= inv_theta * ebm1;
      if (info) (*info)(1 + s, 1 + s) += inv_theta * (ebm1 + 1.0);
    } else {
      *value -= 0.5 * inv_theta * b * b;
      if (grad) (*grad)(1 + s) -= inv_theta * b;
      if (info) (*info)(1 + s, 1 + s) += inv_theta;
    }
  }
}

}  // namespace

double penalty_value(const FrailtySpec& spec, const std::vector<double>& b) {
  if (!(spec.theta > 0.0)) throw std::invalid_argument("frailty penalty requires theta > 0");
  double value = 0.0;
  Eigen::VectorXd psi = pack(0.0, b);
  add_penalty(spec, psi, &value, nullptr, nullptr);
  return value;
}

double penalized_loglik(const PooledDataset& data, double beta,
                        const std::vector<double>& b, const FrailtySpec& spec) {
  if (!(spec.theta > 0.0)) throw std::invalid_argument("penalized_loglik requires theta > 0");
  if (static_cast<int>(b.size()) != data.n_trials)
    throw std::invalid_argument("penalized_loglik: b must have one entry per trial");
  const CoxProblem prob = build_augmented(data);
  const Eigen::VectorXd psi = pack(beta, b);
  double value = cox_eval(prob, psi, TieMethod::breslow, 0).loglik;
  add_penalty(spec, psi, &value, nullptr, nullptr);
  return value;
}

PenalizedEval penalized_eval(const PooledDataset& data, double beta,
                             const std::vector<double>& b, const FrailtySpec& spec) {
  if (!(spec.theta > 0.0)) throw std::invalid_argument("penalized_eval requires theta > 0");
  if (static_cast<int>(b.size()) != data.n_trials)
    throw std::invalid_argument("penalized_eval: b must have one entry per trial");
  const CoxProblem prob = build_augmented(data);
  const Eigen::VectorXd psi = pack(beta, b);
  CoxEval ev = cox_eval(prob, psi, TieMethod::breslow, 2);
  PenalizedEval out;
  out.loglik = ev.loglik;
  out.grad = std::move(ev.grad);
  out.info = std::move(ev.info);
  add_penalty(spec, psi, &out.loglik, &out.grad, &out.info);
  return out;
}

InnerFit inner_fit(const PooledDataset& data, const FrailtySpec& spec,
                   const FitOptions& options) {
  if (!(spec.theta > 0.0)) throw std::invalid_argument("inner_fit requires theta > 0");
  const CoxProblem prob = build_augmented(data);
  const int T = data.n_trials;
  const int k = 1 + T;

  InnerFit fit;
  fit.b.assign(T, 0.0);

  // A group column with no variation anywhere cannot be estimated; the
  // penalty regularizes b only.
  {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(k);
    const CoxEval ev0 = cox_eval(prob, zero, TieMethod::breslow, 2);
    fit.beta_estimable = ev0.info(0, 0) >= kZeroInfoTol;
  }
  const int lo = fit.beta_estimable ? 0 : 1;  // active components = psi[lo..k)
  const int ka = k - lo;

  Eigen::VectorXd psi = Eigen::VectorXd::Zero(k);
  auto eval_at = [&](const Eigen::VectorXd& p, int derivs) {
    CoxEval ev = cox_eval(prob, p, TieMethod::breslow, derivs);
    PenalizedEval pe;
    pe.loglik = ev.loglik;
    if (derivs >= 2) {
      pe.grad = std::move(ev.grad);
      pe.info = std::move(ev.info);
      add_penalty(spec, p, &pe.loglik, &pe.grad, &pe.info);
    } else {
      add_penalty(spec, p, &pe.loglik, nullptr, nullptr);
    }
    return pe;
  };

  PenalizedEval ev = eval_at(psi, 2);
  int iter = 0;
  for (; iter < options.max_iter; ++iter) {
    if (ev.grad.tail(ka).cwiseAbs().maxCoeff() <= options.tol) {
      fit.converged = true;
      break;
    }
    const Eigen::VectorXd delta =
        ev.info.bottomRightCorner(ka, ka).ldlt().solve(ev.grad.tail(ka));
    if (!delta.allFinite()) break;
    // Near the optimum the true gain drops below evaluation noise; accepting
    // noise-flat steps lets Newton finish polishing the gradient.
    const double slack = 1e-11 * (1.0 + std::abs(ev.loglik));
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_step_halvings; ++h) {
      Eigen::VectorXd cand = psi;
      cand.tail(ka) += step * delta;
      const PenalizedEval cand_ev = eval_at(cand, 2);
      if (std::isfinite(cand_ev.loglik) && cand_ev.loglik > ev.loglik - slack) {
        psi = cand;
        ev = cand_ev;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  fit.iterations = iter;
  fit.beta = fit.beta_estimable ? psi(0) : kNaN;
  for (int s = 0; s < T; ++s) fit.b[s] = psi(1 + s);
  fit.penalized_loglik = ev.loglik;
  fit.info = std::move(ev.info);
  return fit;
}

double marginal_loglik_at(const PooledDataset& data, FrailtyDist dist, double theta,
                          const FitOptions& options, InnerFit* fit_out) {
  FrailtySpec spec{dist, theta};
  InnerFit fit = inner_fit(data, spec, options);
  const int T = data.n_trials;

  double marginal = fit.penalized_loglik;
  if (dist == FrailtyDist::gamma) {
    // Exact integrated-gamma correction; depends only on per-trial event
    // counts and a = 1/theta. Stable form of
    // lgamma(D+a) - lgamma(a) - D ln a - (D+a) ln(1 + D/a) + D.
    const double a = 1.0 / theta;
    std::vector<int> events(T, 0);
    for (const Subject& s : data.subjects)
      if (s.event) ++events[s.trial_id];
    for (int s = 0; s < T; ++s) {
      const int d = events[s];
      if (d == 0) continue;
      double c = static_cast<double>(d) - (d + a) * std::log1p(d / a);
      for (int j = 0; j < d; ++j) c += std::log1p(j / a);
      marginal += c;
    }
  } else {
    // Laplace approximation over the b block.
    const auto ldlt = fit.info.bottomRightCorner(T, T).ldlt();
    const double logdet = ldlt.vectorD().array().log().sum();
    marginal += -0.5 * T * std::log(theta) - 0.5 * logdet;
  }
  if (fit_out) *fit_out = std::move(fit);
  return marginal;
}

FrailtyFit fit_frailty(const PooledDataset& data, FrailtyDist dist,
                       const FitOptions& options) {
  if (data.n_trials < 2)
    throw std::invalid_argument("fit_frailty requires at least 2 trials");

  FrailtyFit out;
  out.distribution = dist;
  int inner_total = 0;
  int outer_evals = 0;
  bool any_inner_failure = false;

  auto evaluate = [&](double log_theta) {
    InnerFit fit;
    const double value =
        marginal_loglik_at(data, dist, std::exp(log_theta), options, &fit);
    ++outer_evals;
    inner_total += fit.iterations;
    if (!fit.converged) any_inner_failure = true;
    return value;
  };

  // Coarse log-scale scan to bracket the optimum, then golden-section down to
  // an absolute width of 1e-6 in theta.
  const double la = std::log(kThetaMin);
  const double lb = std::log(kThetaMax);
  constexpr int kGridPoints = 17;
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  double boundary_val = 0.0;
  std::vector<double> grid(kGridPoints);
  for (int i = 0; i < kGridPoints; ++i) {
    grid[i] = la + (lb - la) * i / (kGridPoints - 1);
    const double v = evaluate(grid[i]);
    if (i == 0) boundary_val = v;
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  double lo = grid[std::max(0, best - 1)];
  double hi = grid[std::min(kGridPoints - 1, best + 1)];

  constexpr double kGolden = 0.6180339887498949;
  double x1 = hi - kGolden * (hi - lo);
  double x2 = lo + kGolden * (hi - lo);
  double f1 = evaluate(x1);
  double f2 = evaluate(x2);
  for (int it = 0; it < 90 && std::exp(hi) - std::exp(lo) > 1e-6; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kGolden * (hi - lo);
      f2 = evaluate(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kGolden * (hi - lo);
      f1 = evaluate(x1);
    }
  }
  double theta_hat = std::exp(0.5 * (lo + hi));

  InnerFit final_fit;
  out.marginal_loglik = marginal_loglik_at(data, dist, theta_hat, options, &final_fit);
  ++outer_evals;
  inner_total += final_fit.iterations;

  // The search never evaluates the endpoints; when the lower boundary beats
  // the interior solution the marginal is decreasing there and the fit is
  // reported as "no frailty detected".
  if (boundary_val >= out.marginal_loglik) {
    theta_hat = kThetaMin;
    out.marginal_loglik = marginal_loglik_at(data, dist, theta_hat, options, &final_fit);
    ++outer_evals;
    inner_total += final_fit.iterations;
  }

  out.theta_hat = theta_hat;
  out.no_frailty = theta_hat <= kThetaMin * 1.5;
  out.beta = final_fit.beta;
  out.b = final_fit.b;
  out.estimable = final_fit.beta_estimable;
  out.converged = final_fit.converged && !any_inner_failure;
  out.inner_iterations = inner_total;
  out.outer_iterations = outer_evals;
  out.penalized_loglik = final_fit.penalized_loglik;

  if (out.estimable && out.converged) {
    const int k = 1 + data.n_trials;
    const Eigen::MatrixXd cov =
        final_fit.info.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    const double var = cov(0, 0);
    out.std_err = var > 0.0 && std::isfinite(var) ? std::sqrt(var) : kNaN;
    if (!std::isfinite(out.std_err)) out.estimable = false;
  } else {
    out.std_err = kNaN;
  }
  return out;
}

std::string frailty_to_json(const FrailtyFit& fit, const std::string& model) {
  nlohmann::json j;
  j["model"] = model;
  j["beta"] = std::vector<double>{fit.beta};
  j["se"] = std::vector<double>{fit.std_err};
  j["loglik"] = fit.penalized_loglik;
  j["converged"] = fit.converged;
  j["estimable"] = std::vector<bool>{fit.estimable};
  j["dropped"] = std::vector<int>{};
  j["theta_hat"] = fit.theta_hat;
  j["b"] = fit.b;
  j["marginal_loglik"] = fit.marginal_loglik;
  j["distribution"] =
      fit.distribution == FrailtyDist::gamma ? "gamma" : "log-normal";
  return j.dump();
}

}  // namespace pooledcox
