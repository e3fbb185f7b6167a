#include "pooledcox/cox_core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pooledcox {

void index_strata(CoxProblem& prob, const std::vector<int>& stratum, int n_strata) {
  prob.stratum_order.assign(n_strata, {});
  for (int i = 0; i < prob.n_subjects(); ++i)
    prob.stratum_order[stratum[i]].push_back(i);
  for (auto& ord : prob.stratum_order) {
    std::sort(ord.begin(), ord.end(), [&](int a, int b) {
      if (prob.time[a] != prob.time[b]) return prob.time[a] > prob.time[b];
      return a < b;
    });
  }
}

CoxEval cox_eval(const CoxProblem& prob, const Eigen::VectorXd& beta,
                 TieMethod ties, int derivatives) {
  const int k = prob.n_columns();
  if (beta.size() != k) throw std::invalid_argument("cox_eval: beta length mismatch");
  if (!beta.allFinite()) throw std::invalid_argument("cox_eval: non-finite beta");

  CoxEval ev;
  ev.grad = Eigen::VectorXd::Zero(k);
  ev.info = Eigen::MatrixXd::Zero(k, k);
  const bool derivs = derivatives >= 2;

  Eigen::VectorXd s1(k), s1d(k), xbar(k), x(k);
  Eigen::MatrixXd s2(k, k), s2d(k, k);

  for (const auto& ord : prob.stratum_order) {
    double s0 = 0.0;
    s1.setZero();
    s2.setZero();
    const int m = static_cast<int>(ord.size());
    int i = 0;
    while (i < m) {
      const double t = prob.time[ord[i]];
      int d = 0;
      double sum_eta_ev = 0.0, s0d = 0.0;
      if (derivs) {
        s1d.setZero();
        s2d.setZero();
      }
      // Everyone tied at t (events and censorings alike) is at risk at t.
      for (; i < m && prob.time[ord[i]] == t; ++i) {
        const int id = ord[i];
        x = prob.X.row(id).transpose();
        const double eta = x.dot(beta);
        const double r = std::exp(eta);
        s0 += r;
        if (derivs) {
          s1.noalias() += r * x;
          s2.noalias() += r * x * x.transpose();
        }
        if (prob.event[id]) {
          ++d;
          sum_eta_ev += eta;
          s0d += r;
          if (derivs) {
            ev.grad.noalias() += x;
            s1d.noalias() += r * x;
            s2d.noalias() += r * x * x.transpose();
          }
        }
      }
      if (d == 0) continue;
      ev.loglik += sum_eta_ev;
      if (ties == TieMethod::breslow) {
        ev.loglik -= d * std::log(s0);
        if (derivs) {
          xbar = s1 / s0;
          ev.grad.noalias() -= d * xbar;
          ev.info.noalias() += d * (s2 / s0 - xbar * xbar.transpose());
        }
      } else {
        for (int l = 0; l < d; ++l) {
          const double f = static_cast<double>(l) / d;
          const double s0l = s0 - f * s0d;
          ev.loglik -= std::log(s0l);
          if (derivs) {
            xbar = (s1 - f * s1d) / s0l;
            ev.grad.noalias() -= xbar;
            ev.info.noalias() += (s2 - f * s2d) / s0l - xbar * xbar.transpose();
          }
        }
      }
    }
  }
  return ev;
}

}  // namespace pooledcox
