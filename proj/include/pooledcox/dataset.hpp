// Survival-data domain types shared by all fitters: subjects, pooled trials,
// validation, and risk-set construction.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pooledcox {

enum class TrialGroup : std::uint8_t { A = 0, B = 1 };

inline double group_code(TrialGroup g) { return g == TrialGroup::B ? 1.0 : 0.0; }
inline char group_letter(TrialGroup g) { return g == TrialGroup::B ? 'B' : 'A'; }

struct Subject {
  double time = 0.0;               // follow-up, days
  bool event = false;              // true = event observed, false = censored
  std::vector<double> covariates;  // x; covariates[0] is the group code in simulated data
  int trial_id = 0;
};

// Record of how a simulated dataset was produced; absent for hand-built data.
struct GenerationMeta {
  std::uint64_t master_seed = 0;
  std::uint64_t dataset_seed = 0;
  int dataset_index = 0;
  double hazard_ratio = 1.0;
  std::vector<double> frailties;   // per-trial multiplier s
  std::vector<bool> contrast;      // trials whose frailty location was shifted
  bool single_label = false;       // every trial carries the same group label
};

struct PooledDataset {
  std::vector<Subject> subjects;   // subject id = position
  int n_trials = 1;
  std::vector<TrialGroup> trial_group;  // one label per trial
  std::optional<GenerationMeta> meta;
};

struct Violation {
  int subject = -1;  // -1 for dataset-level problems
  std::string message;
};

// Returns every invariant violation; empty means the dataset is valid.
std::vector<Violation> validate(const PooledDataset& data);

enum class Strata { none, by_trial };

// Risk sets per stratum in a compact form: subjects sorted by ascending time,
// and for each distinct event time the suffix of that order which is at risk
// (time >= event time; censored subjects tied with an event stay at risk).
struct RiskSetIndex {
  struct EventTime {
    double time = 0.0;
    int risk_begin = 0;            // at-risk ids = order[risk_begin..]
    std::vector<int> event_ids;    // ties grouped
  };
  struct Stratum {
    std::vector<int> order;        // subject ids, ascending time (ties by id)
    std::vector<EventTime> event_times;  // strictly increasing times
  };
  std::vector<Stratum> strata;

  std::vector<int> at_risk(int stratum, int event_index) const;
  int total_events() const;
};

RiskSetIndex build_risk_sets(const PooledDataset& data, Strata strata);

// CSV serialization: header `trial_id,group,time,event`, one row per subject.
// Requires exactly one covariate (the group code). Meta goes to a JSON sidecar.
void write_csv(const PooledDataset& data, const std::string& path);
PooledDataset read_csv(const std::string& path);
std::string meta_json_string(const PooledDataset& data);
void write_meta_json(const PooledDataset& data, const std::string& path);

}  // namespace pooledcox
