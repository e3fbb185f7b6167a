#include "pooledcox/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace pooledcox {

std::vector<std::string> scenario_violations(const Scenario& sc) {
  std::vector<std::string> v;
  if (sc.n_trials < 1) v.push_back("n_trials: must be >= 1");
  if (sc.n_patients < sc.n_trials) v.push_back("n_patients: must be >= n_trials");
  if (sc.n_datasets < 1) v.push_back("n_datasets: must be >= 1");
  if (!(sc.unevenness >= 0.0 && sc.unevenness <= 1.0))
    v.push_back("unevenness: must lie in [0, 1]");
  if (!(sc.hazard_ratio > 0.0)) v.push_back("hazard_ratio: must be > 0");
  if (!std::isfinite(sc.frailty_location)) v.push_back("frailty_location: must be finite");
  if (!(sc.frailty_scale >= 0.0)) v.push_back("frailty_scale: must be >= 0");
  if (!(sc.contrast_fraction >= 0.0 && sc.contrast_fraction <= 1.0))
    v.push_back("contrast_fraction: must lie in [0, 1]");
  if (!(sc.event_rate > 0.0 && sc.event_rate < 1.0))
    v.push_back("event_rate: must lie in (0, 1)");
  if (!(sc.censor_rate > 0.0 && sc.censor_rate < 1.0))
    v.push_back("censor_rate: must lie in (0, 1)");
  if (!(sc.horizon > 0.0)) v.push_back("horizon: must be > 0");
  return v;
}

void require_valid(const Scenario& sc) {
  const auto v = scenario_violations(sc);
  if (!v.empty()) throw std::invalid_argument("invalid scenario: " + v.front());
}

namespace {

const char* kScenarioKeys[] = {
    "n_trials",       "n_patients",   "n_datasets",        "unevenness",
    "hazard_ratio",   "frailty_location", "frailty_scale", "contrast_fraction",
    "event_rate",     "censor_rate",  "horizon",           "master_seed"};

}  // namespace

Scenario scenario_from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("scenario JSON must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(kScenarioKeys), std::end(kScenarioKeys),
                     [&](const char* k) { return it.key() == k; }) ==
        std::end(kScenarioKeys))
      throw std::invalid_argument("scenario JSON: unknown field '" + it.key() + "'");
  }
  Scenario sc;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key))
      throw std::invalid_argument(std::string("scenario JSON: missing field '") + key + "'");
    try {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument(std::string("scenario JSON: bad value for field '") + key + "'");
    }
  };
  get("n_trials", sc.n_trials);
  get("n_patients", sc.n_patients);
  get("n_datasets", sc.n_datasets);
  get("unevenness", sc.unevenness);
  get("hazard_ratio", sc.hazard_ratio);
  get("frailty_location", sc.frailty_location);
  get("frailty_scale", sc.frailty_scale);
  get("contrast_fraction", sc.contrast_fraction);
  get("event_rate", sc.event_rate);
  get("censor_rate", sc.censor_rate);
  get("horizon", sc.horizon);
  get("master_seed", sc.master_seed);
  const auto viol = scenario_violations(sc);
  if (!viol.empty()) throw std::invalid_argument("scenario JSON: " + viol.front());
  return sc;
}

Scenario scenario_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return scenario_from_json_string(text);
}

std::string scenario_to_json_string(const Scenario& sc) {
  nlohmann::json j;
  j["n_trials"] = sc.n_trials;
  j["n_patients"] = sc.n_patients;
  j["n_datasets"] = sc.n_datasets;
  j["unevenness"] = sc.unevenness;
  j["hazard_ratio"] = sc.hazard_ratio;
  j["frailty_location"] = sc.frailty_location;
  j["frailty_scale"] = sc.frailty_scale;
  j["contrast_fraction"] = sc.contrast_fraction;
  j["event_rate"] = sc.event_rate;
  j["censor_rate"] = sc.censor_rate;
  j["horizon"] = sc.horizon;
  j["master_seed"] = sc.master_seed;
  return j.dump(2);
}

void write_scenario_json(const Scenario& sc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << scenario_to_json_string(sc) << '\n';
}

double solve_rate(double cum_prob, double horizon) {
  if (!(cum_prob >= 0.0 && cum_prob < 1.0))
    throw std::invalid_argument("solve_rate: cumulative probability must lie in [0, 1)");
  if (!(horizon > 0.0)) throw std::invalid_argument("solve_rate: horizon must be > 0");
  return -std::log1p(-cum_prob) / horizon;
}

std::vector<TrialGroup> assign_trial_groups(int n_trials, double p, Rng& rng) {
  std::vector<TrialGroup> g(n_trials);
  for (auto& gi : g) gi = rng.bernoulli(p) ? TrialGroup::B : TrialGroup::A;
  return g;
}

FrailtyDraws draw_frailties(int n_trials, double nu, double tau,
                            double contrast_fraction, Rng& rng) {
  const int n_contrast = static_cast<int>(std::floor(contrast_fraction * n_trials));
  // Partial Fisher-Yates picks the contrast subset.
  std::vector<int> ids(n_trials);
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < n_contrast; ++i) {
    const int j = i + static_cast<int>(rng.uniform_below(n_trials - i));
    std::swap(ids[i], ids[j]);
  }
  FrailtyDraws out;
  out.contrast.assign(n_trials, false);
  for (int i = 0; i < n_contrast; ++i) out.contrast[ids[i]] = true;
  out.s.resize(n_trials);
  for (int t = 0; t < n_trials; ++t) {
    const double loc = out.contrast[t] ? nu : 0.0;
    out.s[t] = std::exp(loc + tau * rng.normal());  // tau = 0 collapses to the median
  }
  return out;
}

std::vector<int> trial_sizes(int n_patients, int n_trials) {
  std::vector<int> sizes(n_trials, n_patients / n_trials);
  for (int t = 0; t < n_patients % n_trials; ++t) ++sizes[t];
  return sizes;
}

PooledDataset generate_dataset(const Scenario& sc, int dataset_index) {
  require_valid(sc);
  const std::uint64_t seed = derive_seed(sc.master_seed, static_cast<std::uint64_t>(dataset_index));
  Rng rng(seed);

  PooledDataset data;
  data.n_trials = sc.n_trials;
  data.trial_group = assign_trial_groups(sc.n_trials, sc.unevenness, rng);
  const FrailtyDraws fr =
      draw_frailties(sc.n_trials, sc.frailty_location, sc.frailty_scale,
                     sc.contrast_fraction, rng);

  const double h_event = solve_rate(sc.event_rate, sc.horizon);
  const double h_censor = solve_rate(sc.censor_rate, sc.horizon);
  const double log_hr = std::log(sc.hazard_ratio);

  const std::vector<int> sizes = trial_sizes(sc.n_patients, sc.n_trials);
  data.subjects.reserve(sc.n_patients);
  for (int t = 0; t < sc.n_trials; ++t) {
    const double x = group_code(data.trial_group[t]);
    const double rate = h_event * fr.s[t] * std::exp(log_hr * x);
    for (int k = 0; k < sizes[t]; ++k) {
      const double t_event = rng.exponential(rate);
      const double t_censor = rng.exponential(h_censor);
      Subject s;
      s.trial_id = t;
      s.covariates = {x};
      s.time = std::min({t_event, t_censor, sc.horizon});
      s.event = t_event <= t_censor && t_event <= sc.horizon;
      data.subjects.push_back(std::move(s));
    }
  }

  GenerationMeta meta;
  meta.master_seed = sc.master_seed;
  meta.dataset_seed = seed;
  meta.dataset_index = dataset_index;
  meta.hazard_ratio = sc.hazard_ratio;
  meta.frailties = fr.s;
  meta.contrast = fr.contrast;
  meta.single_label =
      std::all_of(data.trial_group.begin(), data.trial_group.end(),
                  [&](TrialGroup g) { return g == data.trial_group.front(); });
  data.meta = meta;
  return data;
}

std::vector<PooledDataset> generate_batch(const Scenario& sc) {
  require_valid(sc);
  std::vector<PooledDataset> out;
  out.reserve(sc.n_datasets);
  for (int i = 0; i < sc.n_datasets; ++i) out.push_back(generate_dataset(sc, i));
  return out;
}

void write_batch(const Scenario& sc, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (int i = 0; i < sc.n_datasets; ++i) {
    const PooledDataset data = generate_dataset(sc, i);
    char name[64];
    std::snprintf(name, sizeof(name), "dataset_%04d", i);
    write_csv(data, (fs::path(dir) / (std::string(name) + ".csv")).string());
    write_meta_json(data, (fs::path(dir) / (std::string(name) + ".meta.json")).string());
  }
  nlohmann::json j;
  j["scenario"] = nlohmann::json::parse(scenario_to_json_string(sc));
  j["n_datasets"] = sc.n_datasets;
  std::ofstream out(fs::path(dir) / "batch_meta.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + dir + "/batch_meta.json");
  out << j.dump(2) << '\n';
}

}  // namespace pooledcox
