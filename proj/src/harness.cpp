#include "pooledcox/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"
#include "pooledcox/coxfit.hpp"
#include "pooledcox/frailty.hpp"
#include "pooledcox/rng.hpp"

namespace fs = std::filesystem;

namespace pooledcox {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const std::vector<std::string> kAllModels = {"cph-S", "cph-F", "cph-G", "cph-L"};
const std::vector<std::string> kPanels = {"bias", "se", "type1", "power"};

std::string fmt_g(double x, int prec = 10) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
  return buf;
}

double json_num(const nlohmann::json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

}  // namespace

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::n_trials: return "n_trials";
    case SweepAxis::unevenness: return "unevenness";
    case SweepAxis::frailty_location: return "frailty_location";
  }
  return "?";
}

std::vector<std::string> sweep_violations(const SweepSpec& spec) {
  std::vector<std::string> v = scenario_violations(spec.base);
  for (auto& msg : v) msg = "base." + msg;
  if (spec.grid.empty()) v.push_back("grid: must be nonempty");
  if (spec.axis == SweepAxis::n_trials) {
    for (double g : spec.grid)
      if (g < 1.0 || g != std::floor(g))
        v.push_back("grid: n_trials values must be positive integers");
  } else if (spec.axis == SweepAxis::unevenness) {
    for (double g : spec.grid)
      if (!(g >= 0.0 && g <= 1.0)) v.push_back("grid: unevenness values must lie in [0, 1]");
  } else {
    for (double g : spec.grid)
      if (!std::isfinite(g)) v.push_back("grid: frailty_location values must be finite");
  }
  if (spec.models.empty()) v.push_back("models: must be nonempty");
  for (const auto& m : spec.models)
    if (std::find(kAllModels.begin(), kAllModels.end(), m) == kAllModels.end())
      v.push_back("models: unknown model '" + m + "'");
  for (const int d : {spec.panel_degree.bias, spec.panel_degree.se,
                      spec.panel_degree.type1, spec.panel_degree.power})
    if (d != 1 && d != 2) v.push_back("panel_degree: degrees must be 1 or 2");
  return v;
}

SweepSpec sweep_from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("sweep JSON parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("base"))
    throw std::invalid_argument("sweep JSON: missing field 'base'");
  SweepSpec spec;
  spec.base = scenario_from_json_string(j.at("base").dump());
  if (!j.contains("axis")) throw std::invalid_argument("sweep JSON: missing field 'axis'");
  const std::string axis = j.at("axis").get<std::string>();
  if (axis == "n_trials")
    spec.axis = SweepAxis::n_trials;
  else if (axis == "unevenness")
    spec.axis = SweepAxis::unevenness;
  else if (axis == "frailty_location")
    spec.axis = SweepAxis::frailty_location;
  else
    throw std::invalid_argument("sweep JSON: bad value for field 'axis'");
  if (!j.contains("grid")) throw std::invalid_argument("sweep JSON: missing field 'grid'");
  try {
    spec.grid = j.at("grid").get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("sweep JSON: bad value for field 'grid'");
  }
  if (j.contains("models")) spec.models = j.at("models").get<std::vector<std::string>>();
  if (j.contains("out_dir")) spec.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("workers")) spec.workers = j.at("workers").get<int>();
  if (j.contains("dump_data")) spec.dump_data = j.at("dump_data").get<bool>();
  if (j.contains("panel_degree")) {
    const auto& pd = j.at("panel_degree");
    if (pd.contains("bias")) spec.panel_degree.bias = pd.at("bias").get<int>();
    if (pd.contains("se")) spec.panel_degree.se = pd.at("se").get<int>();
    if (pd.contains("type1")) spec.panel_degree.type1 = pd.at("type1").get<int>();
    if (pd.contains("power")) spec.panel_degree.power = pd.at("power").get<int>();
  }
  const auto viol = sweep_violations(spec);
  if (!viol.empty()) throw std::invalid_argument("sweep JSON: " + viol.front());
  return spec;
}

SweepSpec sweep_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sweep file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sweep_from_json_string(text);
}

Scenario scenario_at(const SweepSpec& spec, double axis_value, double hazard_ratio) {
  Scenario sc = spec.base;
  switch (spec.axis) {
    case SweepAxis::n_trials: sc.n_trials = static_cast<int>(axis_value); break;
    case SweepAxis::unevenness: sc.unevenness = axis_value; break;
    case SweepAxis::frailty_location: sc.frailty_location = axis_value; break;
  }
  sc.hazard_ratio = hazard_ratio;
  return sc;
}

std::string scenario_id(const SweepSpec& spec, double axis_value, double hazard_ratio) {
  const char* prefix = spec.axis == SweepAxis::n_trials
                           ? "T"
                           : (spec.axis == SweepAxis::unevenness ? "p" : "nu");
  return std::string(prefix) + fmt_g(axis_value) + "_hr" + fmt_g(hazard_ratio);
}

FitRecord fit_one(const PooledDataset& data, const std::string& model) {
  FitRecord rec;
  try {
    if (model == "cph-S" || model == "cph-F") {
      DesignSpec design;
      design.mode = model == "cph-S" ? DesignMode::stratified : DesignMode::fixed_effect;
      design.n_trials = data.n_trials;
      const FitResult fit = newton_fit(data, design);
      rec.json_line = fit_to_json(fit, model);
      rec.est = {fit.beta(0), fit.std_err(0), fit.converged,
                 !fit.estimable.empty() && fit.estimable[0]};
    } else if (model == "cph-G" || model == "cph-L") {
      const FrailtyFit fit = fit_frailty(
          data, model == "cph-G" ? FrailtyDist::gamma : FrailtyDist::log_normal);
      rec.json_line = frailty_to_json(fit, model);
      rec.est = {fit.beta, fit.std_err, fit.converged, fit.estimable};
    } else {
      throw std::invalid_argument("unknown model name: " + model);
    }
  } catch (const std::exception& e) {
    // A failed fit must not take down the batch; it is tallied as unconverged.
    nlohmann::json j;
    j["model"] = model;
    j["beta"] = {nullptr};
    j["se"] = {nullptr};
    j["loglik"] = nullptr;
    j["converged"] = false;
    j["estimable"] = {true};
    j["dropped"] = nlohmann::json::array();
    j["error"] = e.what();
    rec.json_line = j.dump();
    rec.est = {kNaN, kNaN, false, true};
  }
  return rec;
}

std::vector<BatchFits> run_batch_serial(const Scenario& sc,
                                        const std::vector<std::string>& models) {
  require_valid(sc);
  std::vector<BatchFits> out(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    out[m].model = models[m];
    out[m].records.resize(sc.n_datasets);
  }
  for (int i = 0; i < sc.n_datasets; ++i) {
    const PooledDataset data = generate_dataset(sc, i);
    for (std::size_t m = 0; m < models.size(); ++m)
      out[m].records[i] = fit_one(data, models[m]);
  }
  return out;
}

std::vector<BatchFits> run_batch(const Scenario& sc,
                                 const std::vector<std::string>& models, int workers) {
#ifdef _OPENMP
  int nw = workers;
  if (nw <= 0) nw = omp_get_max_threads();
  if (nw == 1) return run_batch_serial(sc, models);

  require_valid(sc);  // throw here, not inside the parallel region
  std::vector<BatchFits> out(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    out[m].model = models[m];
    out[m].records.resize(sc.n_datasets);
  }
  // Each dataset is a pure function of (scenario, index): any schedule yields
  // identical slot contents.
#pragma omp parallel for schedule(dynamic) num_threads(nw)
  for (int i = 0; i < sc.n_datasets; ++i) {
    const PooledDataset data = generate_dataset(sc, i);
    for (std::size_t m = 0; m < models.size(); ++m)
      out[m].records[i] = fit_one(data, models[m]);
  }
  return out;
#else
  (void)workers;
  return run_batch_serial(sc, models);
#endif
}

std::string run_single(const Scenario& sc, int dataset_index, const std::string& model) {
  if (std::find(kAllModels.begin(), kAllModels.end(), model) == kAllModels.end())
    throw std::invalid_argument("unknown model name: " + model);
  if (dataset_index < 0 || dataset_index >= sc.n_datasets)
    throw std::invalid_argument("dataset index out of range");
  return fit_one(generate_dataset(sc, dataset_index), model).json_line;
}

namespace {

// ---- output assembly shared by run_sweep and summarize_dir ----------------

struct CellStats {  // one (grid point, hr, model) cell
  BatchSummary summary;
  double se_sd = kNaN;  // spread of the model SEs, for the SE panel stderr
};

CellStats make_cell(const std::vector<GroupEstimate>& ests, const Scenario& sc,
                    const std::string& model, const std::string& id) {
  CellStats cell;
  cell.summary = summarize_batch(ests, sc, model, id);
  std::vector<double> ses;
  for (const auto& e : ests)
    if (e.estimable && e.converged) ses.push_back(e.se);
  if (ses.size() >= 2) {
    double mean = 0.0;
    for (double s : ses) mean += s;
    mean /= ses.size();
    double ss = 0.0;
    for (double s : ses) ss += (s - mean) * (s - mean);
    cell.se_sd = std::sqrt(ss / (ses.size() - 1));
  }
  return cell;
}

struct PanelPoint {
  double value = kNaN;
  double stderr_ = kNaN;
};

PanelPoint panel_point(const std::string& panel, const CellStats& hr1, const CellStats& hr2,
                       double log_hr2) {
  PanelPoint p;
  const BatchSummary& s1 = hr1.summary;
  const BatchSummary& s2 = hr2.summary;
  if (panel == "bias") {
    p.value = s2.rel_bias_pct;
    if (s2.n_usable >= 2)
      p.stderr_ = 100.0 * s2.emp_sd / (std::abs(log_hr2) * std::sqrt(double(s2.n_usable)));
  } else if (panel == "se") {
    p.value = s2.mean_se;
    if (s2.n_usable >= 2) p.stderr_ = hr2.se_sd / std::sqrt(double(s2.n_usable));
  } else if (panel == "type1") {
    p.value = s1.reject_rate;
    if (s1.n_usable >= 1)
      p.stderr_ = std::sqrt(p.value * (1.0 - p.value) / s1.n_usable);
  } else {  // power
    p.value = s2.reject_rate;
    if (s2.n_usable >= 1)
      p.stderr_ = std::sqrt(p.value * (1.0 - p.value) / s2.n_usable);
  }
  return p;
}

int panel_degree_of(const PanelDegrees& pd, const std::string& panel) {
  if (panel == "bias") return pd.bias;
  if (panel == "se") return pd.se;
  if (panel == "type1") return pd.type1;
  return pd.power;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// cells[g][h][m]: grid point g, hr index h (0 -> 1.0, 1 -> 2.0), model m.
void emit_outputs(const SweepSpec& spec,
                  const std::vector<std::vector<std::vector<CellStats>>>& cells) {
  const fs::path out(spec.out_dir);

  std::ostringstream summary;
  summary << batch_summary_csv_header() << '\n';
  for (std::size_t g = 0; g < spec.grid.size(); ++g)
    for (int h = 0; h < 2; ++h)
      for (std::size_t m = 0; m < spec.models.size(); ++m)
        summary << batch_summary_csv_row(cells[g][h][m].summary) << '\n';
  write_text(out / "summary.csv", summary.str());

  const double log_hr2 = std::log(2.0);
  for (const std::string& panel : kPanels) {
    std::ostringstream csv;
    csv << "axis_value,model,value,mc_stderr\n";
    for (std::size_t g = 0; g < spec.grid.size(); ++g) {
      for (std::size_t m = 0; m < spec.models.size(); ++m) {
        const PanelPoint p =
            panel_point(panel, cells[g][0][m], cells[g][1][m], log_hr2);
        csv << fmt_g(spec.grid[g]) << ',' << spec.models[m] << ',' << fmt_g(p.value)
            << ',' << fmt_g(p.stderr_) << '\n';
      }
    }
    write_text(out / ("panel_" + panel + ".csv"), csv.str());
  }

  // rho/delta comparison: per panel, regress the panel metric on the swept
  // axis per model, average the fitted polynomial over the axis range, and
  // compare the resulting S-bar posterior draws between model pairs.
  nlohmann::json report;
  report["ell_rho"] = 0.05;
  report["ell_delta"] = 0.01;
  report["axis"] = axis_name(spec.axis);
  if (spec.grid.size() < 3) {
    report["skipped"] = "regression needs at least 3 grid points";
  } else {
    const double q = *std::min_element(spec.grid.begin(), spec.grid.end());
    const double r = *std::max_element(spec.grid.begin(), spec.grid.end());
    nlohmann::json panels;
    for (std::size_t pi = 0; pi < kPanels.size(); ++pi) {
      const std::string& panel = kPanels[pi];
      const int degree = panel_degree_of(spec.panel_degree, panel);
      std::vector<std::string> usable_models;
      std::vector<std::vector<double>> sbar_draws;
      nlohmann::json sbar_mean;
      for (std::size_t m = 0; m < spec.models.size(); ++m) {
        std::vector<double> ys;
        bool ok = true;
        for (std::size_t g = 0; g < spec.grid.size(); ++g) {
          const PanelPoint p =
              panel_point(panel, cells[g][0][m], cells[g][1][m], log_hr2);
          if (!std::isfinite(p.value)) ok = false;
          ys.push_back(p.value);
        }
        if (!ok) continue;
        const auto post = bayes_linreg(
            spec.grid, ys, {}, degree, 10000, 1000,
            derive_seed(spec.base.master_seed, pi * 16 + m, 0xba1e5ULL));
        std::vector<double> draws = poly_average_draws(post.coef_draws, q, r);
        double mean = 0.0;
        for (double d : draws) mean += d;
        sbar_mean[spec.models[m]] = mean / draws.size();
        usable_models.push_back(spec.models[m]);
        sbar_draws.push_back(std::move(draws));
      }
      nlohmann::json entry;
      entry["degree"] = degree;
      entry["s_bar_mean"] = sbar_mean;
      nlohmann::json pairs = nlohmann::json::array();
      for (std::size_t a = 0; a < usable_models.size(); ++a) {
        for (std::size_t b = a + 1; b < usable_models.size(); ++b) {
          nlohmann::json pr;
          pr["x"] = usable_models[a];
          pr["y"] = usable_models[b];
          pr["reference"] = usable_models[b];
          pr["rho"] = rho_stat(sbar_draws[a], sbar_draws[b], sbar_draws[b], 0.05);
          pr["delta"] = delta_stat(sbar_draws[a], sbar_draws[b], 0.01);
          pairs.push_back(std::move(pr));
        }
      }
      entry["pairs"] = std::move(pairs);
      panels[panel] = std::move(entry);
    }
    report["panels"] = std::move(panels);
  }
  write_text(out / "rho_delta.json", report.dump(2) + "\n");
}

nlohmann::json manifest_json(const SweepSpec& spec) {
  nlohmann::json j;
  j["base"] = nlohmann::json::parse(scenario_to_json_string(spec.base));
  j["axis"] = axis_name(spec.axis);
  j["grid"] = spec.grid;
  j["models"] = spec.models;
  j["panel_degree"] = {{"bias", spec.panel_degree.bias},
                       {"se", spec.panel_degree.se},
                       {"type1", spec.panel_degree.type1},
                       {"power", spec.panel_degree.power}};
  return j;
}

GroupEstimate record_to_estimate(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  GroupEstimate est;
  est.converged = j.at("converged").get<bool>();
  est.estimable = !j.at("estimable").empty() && j.at("estimable")[0].get<bool>();
  est.beta = json_num(j.at("beta")[0]);
  est.se = json_num(j.at("se")[0]);
  return est;
}

}  // namespace

void run_sweep(const SweepSpec& spec) {
  const auto viol = sweep_violations(spec);
  if (!viol.empty()) throw std::invalid_argument("invalid sweep spec: " + viol.front());
  if (spec.out_dir.empty()) throw std::invalid_argument("sweep spec: out_dir is empty");

  const fs::path out(spec.out_dir);
  fs::create_directories(out / "scenarios");
  fs::create_directories(out / "fits");

  write_text(out / "sweep_manifest.json", manifest_json(spec).dump(2) + "\n");

  const double hrs[2] = {1.0, 2.0};
  std::vector<std::vector<std::vector<CellStats>>> cells(
      spec.grid.size(),
      std::vector<std::vector<CellStats>>(2, std::vector<CellStats>(spec.models.size())));

  for (std::size_t g = 0; g < spec.grid.size(); ++g) {
    for (int h = 0; h < 2; ++h) {
      const Scenario sc = scenario_at(spec, spec.grid[g], hrs[h]);
      const std::string id = scenario_id(spec, spec.grid[g], hrs[h]);
      write_scenario_json(sc, (out / "scenarios" / (id + ".json")).string());
      if (spec.dump_data) write_batch(sc, (out / "data" / id).string());

      const std::vector<BatchFits> fits = run_batch(sc, spec.models, spec.workers);
      for (std::size_t m = 0; m < spec.models.size(); ++m) {
        std::ostringstream lines;
        std::vector<GroupEstimate> ests;
        ests.reserve(fits[m].records.size());
        for (const FitRecord& r : fits[m].records) {
          lines << r.json_line << '\n';
          ests.push_back(r.est);
        }
        write_text(out / "fits" / (id + "_" + spec.models[m] + ".jsonl"), lines.str());
        cells[g][h][m] = make_cell(ests, sc, spec.models[m], id);
      }
    }
  }
  emit_outputs(spec, cells);
}

void summarize_dir(const std::string& out_dir) {
  const fs::path out(out_dir);
  std::ifstream mf(out / "sweep_manifest.json");
  if (!mf) throw std::runtime_error("cannot open sweep manifest in " + out_dir);
  const nlohmann::json j = nlohmann::json::parse(mf);

  SweepSpec spec;
  spec.base = scenario_from_json_string(j.at("base").dump());
  const std::string axis = j.at("axis").get<std::string>();
  spec.axis = axis == "n_trials" ? SweepAxis::n_trials
              : axis == "unevenness" ? SweepAxis::unevenness
                                     : SweepAxis::frailty_location;
  spec.grid = j.at("grid").get<std::vector<double>>();
  spec.models = j.at("models").get<std::vector<std::string>>();
  const auto& pd = j.at("panel_degree");
  spec.panel_degree = {pd.at("bias").get<int>(), pd.at("se").get<int>(),
                       pd.at("type1").get<int>(), pd.at("power").get<int>()};
  spec.out_dir = out_dir;

  const double hrs[2] = {1.0, 2.0};
  std::vector<std::vector<std::vector<CellStats>>> cells(
      spec.grid.size(),
      std::vector<std::vector<CellStats>>(2, std::vector<CellStats>(spec.models.size())));
  for (std::size_t g = 0; g < spec.grid.size(); ++g) {
    for (int h = 0; h < 2; ++h) {
      const Scenario sc = scenario_at(spec, spec.grid[g], hrs[h]);
      const std::string id = scenario_id(spec, spec.grid[g], hrs[h]);
      for (std::size_t m = 0; m < spec.models.size(); ++m) {
        std::ifstream in(out / "fits" / (id + "_" + spec.models[m] + ".jsonl"));
        if (!in)
          throw std::runtime_error("missing fit records for " + id + " " + spec.models[m]);
        std::vector<GroupEstimate> ests;
        std::string line;
        while (std::getline(in, line))
          if (!line.empty()) ests.push_back(record_to_estimate(line));
        cells[g][h][m] = make_cell(ests, sc, spec.models[m], id);
      }
    }
  }
  emit_outputs(spec, cells);
}

}  // namespace pooledcox
