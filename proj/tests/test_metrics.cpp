#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "pooledcox/metrics.hpp"
#include "pooledcox/rng.hpp"
#include "test_util.hpp"

using namespace pooledcox;

TEST_CASE("baseline posterior: gamma updates and frozen means") {
  const auto p1 = baseline_hazard_posterior({1, 1, 1}, {10000, 10000, 10000});
  CHECK(p1.shape == doctest::Approx(3.00001).epsilon(1e-12));
  CHECK(p1.rate == doctest::Approx(30000.00001).epsilon(1e-12));
  CHECK(p1.mean() == doctest::Approx(1e-4).epsilon(1e-5));

  const auto p2 = baseline_hazard_posterior({0, 0, 0}, {100, 100, 100});
  CHECK(p2.mean() == doctest::Approx(1e-5 / 300.00001).epsilon(1e-12));
  CHECK(p2.mean() == doctest::Approx(3.33e-8).epsilon(1e-2));

  const auto p3 = baseline_hazard_posterior({}, {});
  CHECK(p3.shape == 1e-5);
  CHECK(p3.rate == 1e-5);

  CHECK_THROWS_AS(baseline_hazard_posterior({1}, {-1.0}), std::invalid_argument);
  CHECK_THROWS_AS(baseline_hazard_posterior({2}, {1.0}), std::invalid_argument);
}

TEST_CASE("baseline posterior: prior washes out as alpha, gamma -> 0") {
  const double limit = 3.0 / 30000.0;
  const auto a = baseline_hazard_posterior({1, 1, 1}, {10000, 10000, 10000}, 1e-5, 1e-5);
  const auto b = baseline_hazard_posterior({1, 1, 1}, {10000, 10000, 10000}, 1e-12, 1e-12);
  CHECK(std::abs(b.mean() - limit) / limit < 1e-9);
  CHECK(std::abs(a.mean() - limit) > std::abs(b.mean() - limit));  // monotone approach
}

TEST_CASE("baseline posterior: credible interval brackets the mean") {
  const auto p = baseline_hazard_posterior({1, 1, 1}, {10000, 10000, 10000});
  const auto [lo, hi] = p.credible_interval(0.95);
  CHECK(lo < p.mean());
  CHECK(p.mean() < hi);
  CHECK(lo > 0.0);
}

TEST_CASE("bayes_linreg: recovers an exact line") {
  std::vector<double> h, v;
  for (int i = 0; i < 50; ++i) {
    h.push_back(10.0 * i / 49.0);
    v.push_back(2.0 * h.back() + 1.0);
  }
  const auto post = bayes_linreg(h, v);
  const Eigen::VectorXd mean = post.coef_mean();
  CHECK(std::abs(mean(0) - 1.0) < 1e-2);
  CHECK(std::abs(mean(1) - 2.0) < 1e-2);
}

TEST_CASE("bayes_linreg: flat response gives a slope near zero") {
  std::vector<double> h, v;
  for (int i = 0; i < 30; ++i) {
    h.push_back(i);
    v.push_back(5.0);
  }
  const auto post = bayes_linreg(h, v);
  std::vector<double> slopes(post.coef_draws.rows());
  for (Eigen::Index i = 0; i < post.coef_draws.rows(); ++i)
    slopes[i] = post.coef_draws(i, 1);
  CHECK(std::abs(testutil::mean(slopes)) < testutil::sd(slopes) + 1e-12);
}

TEST_CASE("bayes_linreg: noisy slope within 3 posterior SDs") {
  Rng rng(12);
  std::vector<double> h, v;
  for (int i = 0; i < 200; ++i) {
    h.push_back(rng.uniform01() * 4.0);
    v.push_back(3.0 * h.back() + rng.normal(0.0, 0.5));
  }
  const auto post = bayes_linreg(h, v);
  std::vector<double> slopes(post.coef_draws.rows());
  for (Eigen::Index i = 0; i < post.coef_draws.rows(); ++i)
    slopes[i] = post.coef_draws(i, 1);
  CHECK(std::abs(testutil::mean(slopes) - 3.0) < 3.0 * testutil::sd(slopes));
}

TEST_CASE("bayes_linreg: quadratic design recovers a parabola") {
  std::vector<double> h, v;
  for (int i = 0; i < 60; ++i) {
    h.push_back(6.0 * i / 59.0);
    v.push_back(1.0 + 0.5 * h.back() + 0.25 * h.back() * h.back());
  }
  const auto post = bayes_linreg(h, v, {}, 2);
  const Eigen::VectorXd mean = post.coef_mean();
  CHECK(std::abs(mean(0) - 1.0) < 2e-2);
  CHECK(std::abs(mean(1) - 0.5) < 2e-2);
  CHECK(std::abs(mean(2) - 0.25) < 1e-2);
}

TEST_CASE("bayes_linreg: input validation and determinism") {
  CHECK_THROWS_AS(bayes_linreg({1.0, 2.0}, {1.0, 2.0}), std::invalid_argument);
  std::vector<double> h{0, 1, 2, 3}, v{0.2, 1.1, 1.9, 3.2};
  const auto a = bayes_linreg(h, v, {}, 1, 500, 100, 42);
  const auto b = bayes_linreg(h, v, {}, 1, 500, 100, 42);
  CHECK((a.coef_draws - b.coef_draws).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("poly_average: frozen values and validation") {
  CHECK(poly_average({7.0}, -2.0, 5.0) == doctest::Approx(7.0).epsilon(1e-14));
  CHECK(poly_average({0.0, 1.0}, 0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(poly_average({0.0, 0.0, 1.0}, 0.0, 3.0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK_THROWS_AS(poly_average({1.0}, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(poly_average({1.0, 1.0, 1.0, 1.0}, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("poly_average: exact against Simpson quadrature on random quadratics") {
  Rng rng(33);
  for (int rep = 0; rep < 50; ++rep) {
    const std::vector<double> c{rng.normal(), rng.normal(), rng.normal()};
    const double q = -2.0 + 4.0 * rng.uniform01();
    const double r = q + 0.5 + 4.0 * rng.uniform01();
    auto f = [&](double x) { return c[0] + c[1] * x + c[2] * x * x; };
    const int n = 200;
    double simpson = f(q) + f(r);
    for (int i = 1; i < n; ++i)
      simpson += f(q + (r - q) * i / n) * (i % 2 ? 4.0 : 2.0);
    simpson *= (r - q) / (3.0 * n);
    CHECK(std::abs(poly_average(c, q, r) - simpson / (r - q)) < 1e-12);
  }
}

TEST_CASE("rho_stat: frozen values") {
  const std::vector<double> x{1.0, 2.0, 3.0};
  CHECK(rho_stat(x, x, 100.0) == 1.0);

  std::vector<double> y;
  for (double xi : x) y.push_back(xi - 10.0);
  CHECK(rho_stat(x, y, 100.0, 0.05) == 0.0);
}

TEST_CASE("rho_stat: uniform differences give one half") {
  Rng rng(14);
  const int n = 100000;
  std::vector<double> x(n), y(n, 0.0);
  for (double& xi : x) xi = 10.0 * rng.uniform01();
  const double rho = rho_stat(x, y, 100.0, 0.05);
  CHECK(std::abs(rho - 0.5) < 3.0 * std::sqrt(0.25 / n));
}

TEST_CASE("delta_stat: frozen values and the normal interval") {
  const std::vector<double> x{1.0, 2.0};
  CHECK(delta_stat(x, x, 0.01) == 1.0);
  CHECK(delta_stat({5.0, 6.0}, {0.0, 1.0}, 1.0) == 0.0);

  Rng rng(15);
  const int n = 100000;
  std::vector<double> a(n), b(n, 0.0);
  for (double& ai : a) ai = rng.normal();
  const double d = delta_stat(a, b, 1.0);
  CHECK(std::abs(d - 0.6826894921) < 3.0 * std::sqrt(0.683 * 0.317 / n));
}

TEST_CASE("rho/delta: symmetry and monotonicity in the threshold") {
  Rng rng(16);
  std::vector<double> x(2000), y(2000), r(2000);
  for (int i = 0; i < 2000; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
    r[i] = 1.0 + rng.uniform01();
  }
  CHECK(rho_stat(x, y, r, 0.3) == rho_stat(y, x, r, 0.3));
  CHECK(delta_stat(x, y, 0.5) == delta_stat(y, x, 0.5));
  double prev = 0.0;
  for (double ell : {0.1, 0.5, 1.0, 2.0}) {
    const double cur = delta_stat(x, y, ell);
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("rho_stat: zero references are excluded, too many is an error") {
  std::vector<double> x(1000, 1.0), y(1000, 0.0), r(1000, 10.0);
  r[0] = 0.0;  // 0.1% exclusions: allowed
  CHECK(rho_stat(x, y, r, 0.2) == doctest::Approx(1.0));
  for (int i = 0; i < 20; ++i) r[i] = 0.0;  // 2%: error
  CHECK_THROWS_AS(rho_stat(x, y, r, 0.2), std::invalid_argument);
}

TEST_CASE("summarize_batch: exact fits give zero bias and full power") {
  Scenario truth;
  truth.hazard_ratio = 2.0;
  std::vector<GroupEstimate> fits(100, {std::log(2.0), 0.05, true, true});
  const BatchSummary s = summarize_batch(fits, truth, "cph-G", "s");
  CHECK(s.rel_bias_pct == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(s.emp_sd < 1e-12);
  CHECK(s.reject_rate == 1.0);
  CHECK(s.n_usable == 100);
}

TEST_CASE("summarize_batch: rejection rates match the closed-form normal answer") {
  Scenario truth;
  Rng rng(17);

  truth.hazard_ratio = 2.0;
  std::vector<GroupEstimate> power_fits;
  for (int i = 0; i < 1000; ++i)
    power_fits.push_back({rng.normal(std::log(2.0), 0.1), 0.1, true, true});
  const BatchSummary sp = summarize_batch(power_fits, truth, "m", "s");
  CHECK(sp.reject_rate >= 0.995);  // Phi(ln2/0.1 - 1.96) ~ 0.9999997

  truth.hazard_ratio = 1.0;
  std::vector<GroupEstimate> null_fits;
  for (int i = 0; i < 1000; ++i)
    null_fits.push_back({rng.normal(0.0, 0.1), 0.1, true, true});
  const BatchSummary s0 = summarize_batch(null_fits, truth, "m", "s");
  CHECK(std::abs(s0.reject_rate - 0.05) < 3.0 * std::sqrt(0.05 * 0.95 / 1000.0));
  CHECK(s0.rel_bias_pct == doctest::Approx(100.0 * s0.mean_beta).epsilon(1e-12));
}

TEST_CASE("summarize_batch: counts partition the batch") {
  Scenario truth;
  truth.hazard_ratio = 2.0;
  std::vector<GroupEstimate> fits;
  fits.push_back({0.7, 0.1, true, true});
  fits.push_back({0.6, 0.1, true, true});
  fits.push_back({0.0, 0.0, false, true});   // unconverged
  fits.push_back({0.0, 0.0, true, false});   // non-estimable
  const BatchSummary s = summarize_batch(fits, truth, "m", "s");
  CHECK(s.n_usable == 2);
  CHECK(s.n_unconverged == 1);
  CHECK(s.n_non_estimable == 1);
  CHECK(s.n_usable + s.n_unconverged + s.n_non_estimable == s.n_datasets);

  std::vector<GroupEstimate> none(5, {0.0, 0.0, true, false});
  const BatchSummary s2 = summarize_batch(none, truth, "m", "s");
  CHECK(s2.all_non_estimable);
  CHECK(std::isnan(s2.mean_beta));
}

TEST_CASE("batch summary CSV has the pinned header") {
  CHECK(batch_summary_csv_header() ==
        "scenario_id,model,n_estimable,n_unconverged,mean_beta,rel_bias_pct,"
        "emp_sd,mean_se,reject_rate");
  BatchSummary s;
  s.scenario_id = "T10_hr2";
  s.model = "cph-G";
  s.n_usable = 3;
  const std::string row = batch_summary_csv_row(s);
  CHECK(row.substr(0, 14) == "T10_hr2,cph-G,");
}
