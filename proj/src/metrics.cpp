#include "pooledcox/metrics.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "pooledcox/coxfit.hpp"
#include "pooledcox/rng.hpp"

namespace pooledcox {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::pair<double, double> BaselinePosterior::credible_interval(double level) const {
  boost::math::gamma_distribution<> g(shape, 1.0 / rate);  // boost uses scale
  const double tail = 0.5 * (1.0 - level);
  return {boost::math::quantile(g, tail), boost::math::quantile(g, 1.0 - tail)};
}

BaselinePosterior baseline_hazard_posterior(const std::vector<int>& events,
                                            const std::vector<double>& days,
                                            double alpha, double gamma) {
  if (events.size() != days.size())
    throw std::invalid_argument("baseline_hazard_posterior: length mismatch");
  double sum_e = 0.0, sum_d = 0.0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i] != 0 && events[i] != 1)
      throw std::invalid_argument("baseline_hazard_posterior: events must be 0/1");
    if (days[i] < 0.0)
      throw std::invalid_argument("baseline_hazard_posterior: negative day");
    sum_e += events[i];
    sum_d += days[i];
  }
  return {sum_e + alpha, sum_d + gamma, alpha, gamma};
}

LinRegPosterior bayes_linreg(const std::vector<double>& h, const std::vector<double>& v,
                             const LinRegPriors& priors, int degree, int n_draws,
                             int burn_in, std::uint64_t seed) {
  if (h.size() != v.size()) throw std::invalid_argument("bayes_linreg: length mismatch");
  const int n = static_cast<int>(h.size());
  if (n < 3) throw std::invalid_argument("bayes_linreg: need at least 3 points");
  if (degree < 1 || degree > 2) throw std::invalid_argument("bayes_linreg: degree must be 1 or 2");

  const int p = degree + 1;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = h[i];
    if (p == 3) X(i, 2) = h[i] * h[i];
    y(i) = v[i];
  }
  const Eigen::MatrixXd xtx = X.transpose() * X;
  const Eigen::VectorXd xty = X.transpose() * y;

  // Gibbs: [coef | lambda] is Gaussian, [lambda | coef] is gamma.
  Rng rng(seed);
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(p);
  double lambda = 1.0;  // noise precision

  LinRegPosterior post;
  post.coef_draws.resize(n_draws, p);
  post.sigma2_draws.resize(n_draws);

  for (int it = 0; it < burn_in + n_draws; ++it) {
    Eigen::MatrixXd prec = lambda * xtx;
    prec.diagonal().array() += priors.coef_precision;
    const Eigen::LLT<Eigen::MatrixXd> llt(prec);
    const Eigen::VectorXd mean = llt.solve(lambda * xty);
    Eigen::VectorXd z(p);
    for (int j = 0; j < p; ++j) z(j) = rng.normal();
    // coef = mean + L^-T z has covariance prec^-1
    coef = mean + llt.matrixU().solve(z);

    const double rss = (y - X * coef).squaredNorm();
    lambda = rng.gamma(priors.noise_shape + 0.5 * n, priors.noise_rate + 0.5 * rss);

    if (it >= burn_in) {
      post.coef_draws.row(it - burn_in) = coef.transpose();
      post.sigma2_draws[it - burn_in] = 1.0 / lambda;
    }
  }
  return post;
}

double poly_average(const std::vector<double>& coeffs, double q, double r) {
  if (!(r > q)) throw std::invalid_argument("poly_average: need r > q");
  if (coeffs.empty() || coeffs.size() > 3)
    throw std::invalid_argument("poly_average: polynomial degree must be <= 2");
  double sum = 0.0;
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    const double kk = static_cast<double>(k) + 1.0;
    sum += coeffs[k] * (std::pow(r, kk) - std::pow(q, kk)) / kk;
  }
  return sum / (r - q);
}

std::vector<double> poly_average_draws(const Eigen::MatrixXd& coef_draws, double q, double r) {
  std::vector<double> out(coef_draws.rows());
  std::vector<double> c(coef_draws.cols());
  for (Eigen::Index i = 0; i < coef_draws.rows(); ++i) {
    for (Eigen::Index j = 0; j < coef_draws.cols(); ++j) c[j] = coef_draws(i, j);
    out[i] = poly_average(c, q, r);
  }
  return out;
}

namespace {

double interval_fraction(const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<double>* r, double r_scalar, double ell) {
  if (x.size() != y.size() || (r && r->size() != x.size()))
    throw std::invalid_argument("comparison draws must be index-paired");
  if (x.empty()) throw std::invalid_argument("comparison draws are empty");
  std::size_t inside = 0, excluded = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double denom = r ? (*r)[i] : r_scalar;
    if (denom == 0.0) {
      ++excluded;
      continue;
    }
    if (std::abs((x[i] - y[i]) / denom) < ell) ++inside;
  }
  if (excluded * 100 > x.size())
    throw std::invalid_argument("rho_stat: more than 1% of reference draws are zero");
  return static_cast<double>(inside) / static_cast<double>(x.size() - excluded);
}

}  // namespace

double rho_stat(const std::vector<double>& x, const std::vector<double>& y,
                const std::vector<double>& r, double ell) {
  return interval_fraction(x, y, &r, 0.0, ell);
}

double rho_stat(const std::vector<double>& x, const std::vector<double>& y,
                double r, double ell) {
  return interval_fraction(x, y, nullptr, r, ell);
}

double delta_stat(const std::vector<double>& x, const std::vector<double>& y, double ell) {
  return interval_fraction(x, y, nullptr, 1.0, ell);
}

BatchSummary summarize_batch(const std::vector<GroupEstimate>& fits, const Scenario& truth,
                             const std::string& model, const std::string& scenario_id) {
  if (fits.empty()) throw std::invalid_argument("summarize_batch: no fits");
  BatchSummary s;
  s.scenario_id = scenario_id;
  s.model = model;
  s.n_datasets = static_cast<int>(fits.size());

  std::vector<const GroupEstimate*> usable;
  for (const GroupEstimate& f : fits) {
    if (!f.estimable)
      ++s.n_non_estimable;
    else if (!f.converged)
      ++s.n_unconverged;
    else
      usable.push_back(&f);
  }
  s.n_usable = static_cast<int>(usable.size());
  if (usable.empty()) {
    s.all_non_estimable = true;
    s.mean_beta = s.rel_bias_pct = s.emp_sd = s.mean_se = s.reject_rate = kNaN;
    return s;
  }

  double sum_beta = 0.0, sum_se = 0.0;
  int rejected = 0;
  for (const GroupEstimate* f : usable) {
    sum_beta += f->beta;
    sum_se += f->se;
    if (normal_two_sided_p(f->beta / f->se) < 0.05) ++rejected;
  }
  s.mean_beta = sum_beta / s.n_usable;
  s.mean_se = sum_se / s.n_usable;
  s.reject_rate = static_cast<double>(rejected) / s.n_usable;

  const double log_hr = std::log(truth.hazard_ratio);
  // At HR = 1 the reference is 0, so report the absolute deviation on the log
  // scale (x100); otherwise the usual relative bias in percent.
  s.rel_bias_pct = truth.hazard_ratio == 1.0
                       ? 100.0 * s.mean_beta
                       : 100.0 * (s.mean_beta - log_hr) / log_hr;

  if (s.n_usable >= 2) {
    double ss = 0.0;
    for (const GroupEstimate* f : usable) ss += (f->beta - s.mean_beta) * (f->beta - s.mean_beta);
    s.emp_sd = std::sqrt(ss / (s.n_usable - 1));
  } else {
    s.emp_sd = kNaN;
  }
  return s;
}

std::string batch_summary_csv_header() {
  return "scenario_id,model,n_estimable,n_unconverged,mean_beta,rel_bias_pct,"
         "emp_sd,mean_se,reject_rate";
}

std::string batch_summary_csv_row(const BatchSummary& s) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%s,%s,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g",
                s.scenario_id.c_str(), s.model.c_str(), s.n_usable, s.n_unconverged,
                s.mean_beta, s.rel_bias_pct, s.emp_sd, s.mean_se, s.reject_rate);
  return buf;
}

}  // namespace pooledcox
