#include "pooledcox/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pooledcox {

std::vector<Violation> validate(const PooledDataset& data) {
  std::vector<Violation> out;
  if (data.n_trials < 1) out.push_back({-1, "n_trials must be >= 1"});
  if (static_cast<int>(data.trial_group.size()) != data.n_trials)
    out.push_back({-1, "trial_group must have exactly n_trials entries"});

  std::size_t n_cov = data.subjects.empty() ? 0 : data.subjects.front().covariates.size();
  for (int i = 0; i < static_cast<int>(data.subjects.size()); ++i) {
    const Subject& s = data.subjects[i];
    if (!(s.time >= 0.0) || !std::isfinite(s.time))
      out.push_back({i, "negative time or non-finite time"});
    if (s.covariates.size() != n_cov)
      out.push_back({i, "covariate length differs across subjects"});
    if (s.trial_id < 0 || s.trial_id >= data.n_trials)
      out.push_back({i, "trial id out of range"});
  }

  // Simulated datasets must encode the trial label as the first covariate.
  if (data.meta && !data.trial_group.empty() && n_cov >= 1) {
    for (int i = 0; i < static_cast<int>(data.subjects.size()); ++i) {
      const Subject& s = data.subjects[i];
      if (s.trial_id < 0 || s.trial_id >= data.n_trials) continue;
      if (s.covariates[0] != group_code(data.trial_group[s.trial_id]))
        out.push_back({i, "group covariate does not match trial label"});
    }
  }
  return out;
}

std::vector<int> RiskSetIndex::at_risk(int stratum, int event_index) const {
  const Stratum& st = strata.at(stratum);
  const EventTime& et = st.event_times.at(event_index);
  return std::vector<int>(st.order.begin() + et.risk_begin, st.order.end());
}

int RiskSetIndex::total_events() const {
  int n = 0;
  for (const auto& st : strata)
    for (const auto& et : st.event_times) n += static_cast<int>(et.event_ids.size());
  return n;
}

RiskSetIndex build_risk_sets(const PooledDataset& data, Strata strata) {
  const int n_strata = strata == Strata::by_trial ? data.n_trials : 1;
  RiskSetIndex idx;
  idx.strata.resize(n_strata);

  for (int i = 0; i < static_cast<int>(data.subjects.size()); ++i) {
    const int s = strata == Strata::by_trial ? data.subjects[i].trial_id : 0;
    idx.strata[s].order.push_back(i);
  }

  for (auto& st : idx.strata) {
    std::sort(st.order.begin(), st.order.end(), [&](int a, int b) {
      if (data.subjects[a].time != data.subjects[b].time)
        return data.subjects[a].time < data.subjects[b].time;
      return a < b;
    });
    // Walk ascending; each distinct time holding at least one event opens an
    // event-time entry whose risk set is the suffix starting at that time.
    const int n = static_cast<int>(st.order.size());
    int i = 0;
    while (i < n) {
      const double t = data.subjects[st.order[i]].time;
      int j = i;
      std::vector<int> events;
      while (j < n && data.subjects[st.order[j]].time == t) {
        if (data.subjects[st.order[j]].event) events.push_back(st.order[j]);
        ++j;
      }
      if (!events.empty()) st.event_times.push_back({t, i, std::move(events)});
      i = j;
    }
  }
  return idx;
}

namespace {

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void write_csv(const PooledDataset& data, const std::string& path) {
  for (const Subject& s : data.subjects)
    if (s.covariates.size() != 1)
      throw std::invalid_argument("write_csv requires exactly one covariate per subject");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "trial_id,group,time,event\n";
  for (const Subject& s : data.subjects) {
    out << s.trial_id << ',' << static_cast<int>(s.covariates[0]) << ','
        << fmt17(s.time) << ',' << (s.event ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

PooledDataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "trial_id,group,time,event")
    throw std::runtime_error("bad dataset CSV header in " + path);

  PooledDataset data;
  int max_trial = -1;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    Subject s;
    double group = 0.0;
    int event_flag = 0;
    try {
      std::getline(ss, field, ',');
      s.trial_id = std::stoi(field);
      std::getline(ss, field, ',');
      group = std::stod(field);
      std::getline(ss, field, ',');
      s.time = std::stod(field);
      std::getline(ss, field, ',');
      event_flag = std::stoi(field);
    } catch (const std::exception&) {
      throw std::runtime_error("bad dataset CSV row " + std::to_string(row) + " in " + path);
    }
    s.event = event_flag != 0;
    s.covariates = {group};
    max_trial = std::max(max_trial, s.trial_id);
    data.subjects.push_back(std::move(s));
  }
  data.n_trials = std::max(1, max_trial + 1);
  data.trial_group.assign(data.n_trials, TrialGroup::A);
  for (const Subject& s : data.subjects)
    if (s.covariates[0] == 1.0) data.trial_group[s.trial_id] = TrialGroup::B;
  return data;
}

std::string meta_json_string(const PooledDataset& data) {
  nlohmann::json j;
  j["n_trials"] = data.n_trials;
  std::string labels;
  for (TrialGroup g : data.trial_group) labels.push_back(group_letter(g));
  j["trial_group"] = labels;
  if (data.meta) {
    const GenerationMeta& m = *data.meta;
    j["master_seed"] = m.master_seed;
    j["dataset_seed"] = m.dataset_seed;
    j["dataset_index"] = m.dataset_index;
    j["hazard_ratio"] = m.hazard_ratio;
    j["frailties"] = m.frailties;
    j["contrast"] = m.contrast;
    j["single_label"] = m.single_label;
  }
  return j.dump();
}

void write_meta_json(const PooledDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << meta_json_string(data) << '\n';
}

}  // namespace pooledcox
