// Benchmark: serial reference batch runner versus the OpenMP runner on a
// desk-scale batch, with an equality check on the serialized records.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pooledcox/harness.hpp"

using Clock = std::chrono::steady_clock;

static double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int main(int argc, char** argv) {
  pooledcox::Scenario sc;
  sc.n_trials = 10;
  sc.n_patients = 500;
  sc.n_datasets = argc > 1 ? std::atoi(argv[1]) : 24;
  sc.unevenness = 0.5;
  sc.hazard_ratio = 2.0;
  sc.frailty_scale = 0.5;
  sc.master_seed = 20180507;
#ifdef _OPENMP
  const int workers = argc > 2 ? std::atoi(argv[2]) : omp_get_max_threads();
#else
  const int workers = 1;
#endif
  const std::vector<std::string> models = {"cph-S", "cph-F", "cph-G", "cph-L"};

  std::printf("batch: %d datasets, N=%d, T=%d, models=4\n", sc.n_datasets,
              sc.n_patients, sc.n_trials);

  auto t0 = Clock::now();
  const auto serial = pooledcox::run_batch_serial(sc, models);
  const double t_serial = seconds_since(t0);
  std::printf("serial reference : %8.3f s  (%.1f fits/s)\n", t_serial,
              4.0 * sc.n_datasets / t_serial);

  t0 = Clock::now();
  const auto parallel = pooledcox::run_batch(sc, models, workers);
  const double t_parallel = seconds_since(t0);
  std::printf("openmp x%-2d       : %8.3f s  (%.1f fits/s)\n", workers, t_parallel,
              4.0 * sc.n_datasets / t_parallel);

  bool identical = true;
  for (std::size_t m = 0; m < models.size() && identical; ++m)
    for (int i = 0; i < sc.n_datasets && identical; ++i)
      identical = serial[m].records[i].json_line == parallel[m].records[i].json_line;

  std::printf("speedup          : %8.2fx\n", t_serial / t_parallel);
  std::printf("results identical: %s\n", identical ? "yes" : "NO");
  return identical ? 0 : 1;
}
