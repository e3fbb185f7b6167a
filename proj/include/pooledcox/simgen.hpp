// Simulated pooled-trial data: per-trial group assignment, log-normal trial
// frailties, exponential event/censoring times with administrative cutoff.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pooledcox/dataset.hpp"
#include "pooledcox/rng.hpp"

namespace pooledcox {

// Full simulation configuration for one batch of datasets.
struct Scenario {
  int n_trials = 10;              // T
  int n_patients = 2000;          // N
  int n_datasets = 1000;
  double unevenness = 0.5;        // p, probability a trial is all group B
  double hazard_ratio = 1.0;      // HR between groups B and A
  double frailty_location = 0.0;  // nu
  double frailty_scale = 0.0;     // tau
  double contrast_fraction = 0.5; // fraction of trials with the shifted location
  double event_rate = 0.15;       // cumulative event probability at horizon
  double censor_rate = 0.25;      // cumulative censoring probability at horizon
  double horizon = 1825.0;        // days
  std::uint64_t master_seed = 0;
};

// Empty when the scenario is valid; otherwise one message per bad field,
// each starting with the field name.
std::vector<std::string> scenario_violations(const Scenario& sc);
void require_valid(const Scenario& sc);  // throws std::invalid_argument

Scenario scenario_from_json_string(const std::string& text);
Scenario scenario_from_json_file(const std::string& path);
std::string scenario_to_json_string(const Scenario& sc);
void write_scenario_json(const Scenario& sc, const std::string& path);

struct TrialEffects {
  std::vector<double> frailty;      // s > 0, hazard multiplier per trial
  std::vector<TrialGroup> group;
  std::vector<bool> contrast;       // drawn from LN(nu, tau) rather than LN(0, tau)
};

// h with 1 - exp(-h * horizon) = cum_prob.
double solve_rate(double cum_prob, double horizon);

std::vector<TrialGroup> assign_trial_groups(int n_trials, double p, Rng& rng);

struct FrailtyDraws {
  std::vector<double> s;
  std::vector<bool> contrast;
};
FrailtyDraws draw_frailties(int n_trials, double nu, double tau,
                            double contrast_fraction, Rng& rng);

// N patients split as evenly as possible; the remainder goes to the lowest ids.
std::vector<int> trial_sizes(int n_patients, int n_trials);

// Dataset i is a pure function of (scenario, i); workers never share state.
PooledDataset generate_dataset(const Scenario& sc, int dataset_index);
std::vector<PooledDataset> generate_batch(const Scenario& sc);

// Directory of per-dataset CSVs (dataset_0000.csv, ...) with JSON meta
// sidecars plus batch_meta.json.
void write_batch(const Scenario& sc, const std::string& dir);

}  // namespace pooledcox
