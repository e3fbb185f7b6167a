// Scenario sweeps: generate batches, fit the requested models in parallel
// over dataset indices, and emit figure-ready panel CSVs plus the rho/delta
// comparison report. Outputs are byte-identical for any worker count.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pooledcox/dataset.hpp"
#include "pooledcox/metrics.hpp"
#include "pooledcox/simgen.hpp"

namespace pooledcox {

enum class SweepAxis { n_trials, unevenness, frailty_location };

std::string axis_name(SweepAxis axis);

struct PanelDegrees {
  int bias = 1;
  int se = 1;
  int type1 = 1;
  int power = 1;
};

struct SweepSpec {
  Scenario base;
  SweepAxis axis = SweepAxis::n_trials;
  std::vector<double> grid;
  std::vector<std::string> models = {"cph-S", "cph-F", "cph-G", "cph-L"};
  std::string out_dir;
  int workers = 0;  // 0 = all available
  PanelDegrees panel_degree;
  bool dump_data = false;
};

std::vector<std::string> sweep_violations(const SweepSpec& spec);
SweepSpec sweep_from_json_string(const std::string& text);
SweepSpec sweep_from_json_file(const std::string& path);

// Scenario at one grid point: the swept axis applied, plus the HR under test.
Scenario scenario_at(const SweepSpec& spec, double axis_value, double hazard_ratio);
std::string scenario_id(const SweepSpec& spec, double axis_value, double hazard_ratio);

// One dataset fitted with one model; the serialized record is the external
// FitResult JSON (one line of the sweep's .jsonl files).
struct FitRecord {
  std::string json_line;
  GroupEstimate est;
};
FitRecord fit_one(const PooledDataset& data, const std::string& model);

struct BatchFits {
  std::string model;
  std::vector<FitRecord> records;  // indexed by dataset
};

// Serial reference implementation.
std::vector<BatchFits> run_batch_serial(const Scenario& sc,
                                        const std::vector<std::string>& models);
// OpenMP over dataset indices; results identical to the serial path.
std::vector<BatchFits> run_batch(const Scenario& sc,
                                 const std::vector<std::string>& models, int workers);

void run_sweep(const SweepSpec& spec);

// Single-dataset debugging entry point; matches the sweep record bit-for-bit.
std::string run_single(const Scenario& sc, int dataset_index, const std::string& model);

// Recompute summary.csv, panel CSVs, and rho_delta.json from stored fits.
void summarize_dir(const std::string& out_dir);

}  // namespace pooledcox
