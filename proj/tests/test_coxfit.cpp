#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "pooledcox/coxfit.hpp"
#include "pooledcox/simgen.hpp"
#include "test_util.hpp"

using namespace pooledcox;
using testutil::make_dataset;
using testutil::Row;

namespace {

PooledDataset two_subject_example() {
  return make_dataset({{1.0, true, {1.0}, 0}, {2.0, true, {0.0}, 0}});
}

// Events alternate between covariate levels, so the MLE is finite.
PooledDataset interleaved_example() {
  return make_dataset({{1.0, true, {1.0}, 0},
                       {2.0, true, {0.0}, 0},
                       {3.0, true, {1.0}, 0},
                       {4.0, true, {0.0}, 0}});
}

Eigen::VectorXd scalar(double b) {
  Eigen::VectorXd v(1);
  v(0) = b;
  return v;
}

}  // namespace

TEST_CASE("log partial likelihood: frozen hand-enumerated values") {
  const auto d = two_subject_example();
  CHECK(log_partial_likelihood(d, {}, scalar(0.0)) ==
        doctest::Approx(-0.6931471805599453).epsilon(1e-12));
  CHECK(log_partial_likelihood(d, {}, scalar(std::log(2.0))) ==
        doctest::Approx(-0.4054651081081645).epsilon(1e-12));
}

TEST_CASE("log partial likelihood: zero events gives zero") {
  const auto d = make_dataset({{1.0, false, {1.0}, 0}, {2.0, false, {0.0}, 0}});
  CHECK(log_partial_likelihood(d, {}, scalar(0.7)) == 0.0);
}

TEST_CASE("log partial likelihood: rejects bad beta") {
  const auto d = two_subject_example();
  Eigen::VectorXd wrong(2);
  wrong << 0.0, 0.0;
  CHECK_THROWS_AS(log_partial_likelihood(d, {}, wrong), std::invalid_argument);
  CHECK_THROWS_AS(
      log_partial_likelihood(d, {}, scalar(std::numeric_limits<double>::quiet_NaN())),
      std::invalid_argument);
}

TEST_CASE("score matches central finite differences on random data") {
  Rng rng(314);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 5 + static_cast<int>(rng.uniform_below(8));
    const int k = 1 + static_cast<int>(rng.uniform_below(3));
    std::vector<Row> rows;
    for (int i = 0; i < n; ++i) {
      Row r;
      r.time = rng.exponential(1.0);
      r.event = rng.bernoulli(0.7);
      r.x.resize(k);
      for (double& x : r.x) x = rng.normal();
      rows.push_back(std::move(r));
    }
    const auto d = make_dataset(rows);
    Eigen::VectorXd beta(k);
    for (int j = 0; j < k; ++j) beta(j) = 0.3 * rng.normal();

    const DesignSpec design;
    const auto [grad, info] = score_and_information(d, design, beta);
    const auto f = [&](const Eigen::VectorXd& b) {
      return log_partial_likelihood(d, design, b);
    };
    CHECK(testutil::rel_err(grad, testutil::fd_gradient(f, beta)) < 1e-6);
    CHECK((info - info.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("information matches the finite-difference Hessian on the toy example") {
  const auto d = two_subject_example();
  const double b0 = 0.4, h = 1e-5;
  const auto [grad, info] = score_and_information(d, {}, scalar(b0));
  const double fpp = (log_partial_likelihood(d, {}, scalar(b0 + h)) -
                      2.0 * log_partial_likelihood(d, {}, scalar(b0)) +
                      log_partial_likelihood(d, {}, scalar(b0 - h))) /
                     (h * h);
  CHECK(info(0, 0) == doctest::Approx(-fpp).epsilon(1e-6));
  CHECK(info(0, 0) > 0.0);
}

TEST_CASE("constant covariate contributes zero score and information") {
  const auto d = make_dataset({{1.0, true, {1.0, 2.0}, 0},
                               {2.0, true, {1.0, 1.0}, 0},
                               {3.0, false, {1.0, 0.0}, 0}});
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(2);
  const auto [grad, info] = score_and_information(d, {}, beta);
  CHECK(grad(0) == 0.0);
  CHECK(info(0, 0) == 0.0);
}

TEST_CASE("detect_aliasing: group constant per trial flags one indicator") {
  Scenario sc;
  sc.n_trials = 5;
  sc.n_patients = 100;
  sc.n_datasets = 1;
  sc.master_seed = 21;
  PooledDataset d;
  for (int i = 0; i < 20; ++i) {  // find a seeded dataset with both labels
    d = generate_dataset(sc, i);
    if (!d.meta->single_label) break;
  }
  REQUIRE(!d.meta->single_label);
  DesignSpec design{DesignMode::fixed_effect, TieMethod::breslow, sc.n_trials};
  const auto aliased = detect_aliasing(d, design);
  REQUIRE(aliased.size() == 1);
  CHECK(aliased[0] >= 1);  // a trial indicator, never the group column
}

TEST_CASE("detect_aliasing: unadjusted design with variation is clean") {
  const auto d = interleaved_example();
  CHECK(detect_aliasing(d, {}).empty());
}

TEST_CASE("detect_aliasing: within-trial variation clears the fixed-effect design") {
  std::vector<Row> rows;
  Rng rng(8);
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 12; ++i)
      rows.push_back({rng.exponential(1.0), rng.bernoulli(0.8),
                      {rng.bernoulli(0.5) ? 1.0 : 0.0}, t});
  const auto d = make_dataset(rows, 3);
  DesignSpec design{DesignMode::fixed_effect, TieMethod::breslow, 3};
  CHECK(detect_aliasing(d, design).empty());
}

TEST_CASE("newton_fit matches the grid-search oracle on finite-MLE datasets") {
  Rng rng(2718);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = testutil::random_finite_mle_dataset(rng);
    const FitResult fit = newton_fit(d, {});
    REQUIRE(fit.converged);
    REQUIRE(fit.estimable[0]);
    const double oracle = testutil::grid_argmax(d, {}, -10.0, 10.0, 1e-4);
    CHECK(std::abs(fit.beta(0) - oracle) < 1e-3);
  }
}

TEST_CASE("stratified fit on single-label-per-trial data is non-estimable") {
  Scenario sc;
  sc.n_trials = 4;
  sc.n_patients = 80;
  sc.n_datasets = 1;
  sc.master_seed = 33;
  const PooledDataset d = generate_dataset(sc, 0);
  DesignSpec design{DesignMode::stratified, TieMethod::breslow, sc.n_trials};
  const FitResult fit = newton_fit(d, design);
  CHECK(!fit.estimable[0]);
  CHECK(fit.dropped_aliased == std::vector<int>{0});
}

TEST_CASE("unadjusted fit recovers HR=2 on a large simulated dataset") {
  Scenario sc;
  sc.n_trials = 10;
  sc.n_patients = 20000;
  sc.n_datasets = 1;
  sc.hazard_ratio = 2.0;
  sc.master_seed = 55;
  const PooledDataset d = generate_dataset(sc, 0);
  const FitResult fit = newton_fit(d, {});
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.beta(0) - std::log(2.0)) < 3.0 * fit.std_err(0));
}

TEST_CASE("monotone likelihood trips the runaway guard") {
  // Likelihood increases in beta forever; the small covariate scale keeps the
  // gradient alive in double precision until |beta| passes the bound.
  const auto d = make_dataset({{1.0, true, {0.05}, 0}, {2.0, true, {0.0}, 0}});
  FitOptions opts;
  opts.tol = 0.0;
  opts.loglik_tol = -1.0;  // disable the other exits to reach the guard
  opts.max_iter = 5000;
  const FitResult fit = newton_fit(d, {}, opts);
  CHECK(!fit.converged);
  CHECK(!fit.estimable[0]);
  CHECK(std::abs(fit.beta(0)) > 500.0);
}

TEST_CASE("wald test: frozen values") {
  FitResult fit;
  fit.beta = scalar(0.0);
  fit.std_err = scalar(1.0);
  fit.estimable = {true};
  auto w = wald_test(fit, 0, 0.0);
  CHECK(w.z == 0.0);
  CHECK(w.p_value == 1.0);

  fit.beta = scalar(1.959964);
  w = wald_test(fit, 0, 0.0);
  CHECK(std::abs(w.p_value - 0.05) < 1e-6);

  fit.beta = scalar(std::log(2.0));
  fit.std_err = scalar(0.1);
  w = wald_test(fit, 0, 0.0);
  CHECK(w.z == doctest::Approx(6.93).epsilon(1e-3));
  CHECK(w.p_value < 1e-11);

  fit.estimable = {false};
  CHECK_THROWS_AS(wald_test(fit, 0, 0.0), std::invalid_argument);
}

TEST_CASE("breslow baseline: hand-computed increments at beta = 0") {
  const auto d = two_subject_example();
  FitResult fit;
  fit.beta = scalar(0.0);
  fit.std_err = scalar(1.0);
  fit.estimable = {true};
  fit.converged = true;
  const auto base = breslow_baseline(fit, d, {});
  REQUIRE(base.size() == 1);
  REQUIRE(base[0].time.size() == 2);
  CHECK(base[0].value[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(base[0].value[1] == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("breslow baseline: no events means an empty step function") {
  const auto d = make_dataset({{1.0, false, {0.0}, 0}});
  FitResult fit;
  fit.beta = scalar(0.0);
  fit.std_err = scalar(1.0);
  fit.estimable = {true};
  const auto base = breslow_baseline(fit, d, {});
  CHECK(base[0].time.empty());
}

TEST_CASE("breslow baseline: stratified fit yields one nondecreasing curve per trial") {
  Scenario sc;
  sc.n_trials = 3;
  sc.n_patients = 60;
  sc.n_datasets = 1;
  sc.master_seed = 60;
  const PooledDataset d = generate_dataset(sc, 0);
  DesignSpec design{DesignMode::stratified, TieMethod::breslow, 3};
  const FitResult fit = newton_fit(d, design);
  const auto base = breslow_baseline(fit, d, design);
  REQUIRE(base.size() == 3);
  for (const auto& fn : base)
    for (std::size_t i = 1; i < fn.value.size(); ++i)
      CHECK(fn.value[i] >= fn.value[i - 1]);
}

TEST_CASE("property: partial likelihood is concave along random segments") {
  Rng rng(404);
  const auto d = testutil::random_finite_mle_dataset(rng);
  for (int rep = 0; rep < 50; ++rep) {
    const double a = 4.0 * rng.normal(), c = 4.0 * rng.normal();
    const double mid = 0.5 * (a + c);
    const double lhs = log_partial_likelihood(d, {}, scalar(mid));
    const double rhs = 0.5 * (log_partial_likelihood(d, {}, scalar(a)) +
                              log_partial_likelihood(d, {}, scalar(c)));
    CHECK(lhs >= rhs - 1e-8);
  }
}

TEST_CASE("property: strictly increasing time transforms leave the fit unchanged") {
  Rng rng(505);
  const auto d = testutil::random_finite_mle_dataset(rng);
  const FitResult fit = newton_fit(d, {});

  PooledDataset scaled = d;
  for (Subject& s : scaled.subjects) s.time *= 3.0;
  PooledDataset squared = d;
  for (Subject& s : squared.subjects) s.time = s.time * s.time;

  for (const PooledDataset* t : {&scaled, &squared}) {
    const FitResult other = newton_fit(*t, {});
    CHECK(other.beta(0) == doctest::Approx(fit.beta(0)).epsilon(1e-12));
    CHECK(other.std_err(0) == doctest::Approx(fit.std_err(0)).epsilon(1e-12));
  }
}

TEST_CASE("property: subject order does not change the fit") {
  Rng rng(606);
  const auto d = testutil::random_finite_mle_dataset(rng);
  PooledDataset rev = d;
  std::reverse(rev.subjects.begin(), rev.subjects.end());
  const FitResult a = newton_fit(d, {});
  const FitResult b = newton_fit(rev, {});
  CHECK(a.beta(0) == doctest::Approx(b.beta(0)).epsilon(1e-10));
  CHECK(a.std_err(0) == doctest::Approx(b.std_err(0)).epsilon(1e-10));
  CHECK(a.loglik == doctest::Approx(b.loglik).epsilon(1e-10));
}

TEST_CASE("breslow and efron agree exactly on tie-free data") {
  Rng rng(707);
  const auto d = testutil::random_finite_mle_dataset(rng);
  DesignSpec breslow{DesignMode::unadjusted, TieMethod::breslow, 1};
  DesignSpec efron{DesignMode::unadjusted, TieMethod::efron, 1};
  const FitResult fb = newton_fit(d, breslow);
  const FitResult fe = newton_fit(d, efron);
  CHECK(std::abs(fb.beta(0) - fe.beta(0)) < 1e-10);
  CHECK(std::abs(fb.std_err(0) - fe.std_err(0)) < 1e-10);
}

TEST_CASE("efron handles ties with the hand-derived denominator") {
  // Two events tied at t=1 (x=1 and x=0) plus a censored subject at t=2 (x=1):
  //   breslow ll(0) = -2 ln 3, efron ll(0) = -ln 3 - ln 2.
  const auto d = make_dataset(
      {{1.0, true, {1.0}, 0}, {1.0, true, {0.0}, 0}, {2.0, false, {1.0}, 0}});
  DesignSpec efron{DesignMode::unadjusted, TieMethod::efron, 1};
  CHECK(log_partial_likelihood(d, {}, scalar(0.0)) ==
        doctest::Approx(-2.1972245773362196).epsilon(1e-12));
  CHECK(log_partial_likelihood(d, efron, scalar(0.0)) ==
        doctest::Approx(-1.791759469228055).epsilon(1e-12));
}

TEST_CASE("fit JSON carries the contract fields") {
  const auto d = interleaved_example();
  const FitResult fit = newton_fit(d, {});
  const std::string j = fit_to_json(fit, "cph-F");
  for (const char* key : {"\"model\"", "\"beta\"", "\"se\"", "\"loglik\"",
                          "\"converged\"", "\"estimable\"", "\"dropped\""})
    CHECK(j.find(key) != std::string::npos);
}
