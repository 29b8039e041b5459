#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "switchback/breakpoints.hpp"
#include "switchback/design.hpp"
#include "switchback/estimation.hpp"
#include "switchback/probability.hpp"
#include "switchback/simulation.hpp"

namespace switchback {

using json = nlohmann::json;

// Schema identifiers embedded in every emitted JSON document; the documents
// themselves live under schemas/.
inline std::string schema_id(const std::string& name) { return "switchback/" + name + "/v1"; }

// ---------------------------------------------------------------------------
// CSV panel formats. Header row is `unit,t1,...,tS`, one row per unit.
// Assignment cells are 0/1; outcome cells are decimals printed with 17
// significant digits so a read-back is bit-exact.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

struct CsvPanel {
  std::vector<std::string> unit_ids;
  std::vector<std::vector<std::string>> rows;  // raw cells, header stripped
  int n_steps = 0;
};

inline CsvPanel read_csv_panel(std::istream& in, const std::string& origin) {
  CsvPanel panel;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(origin + ": no data rows");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2) {
    throw std::runtime_error(origin + ": header must be unit,t1,...,tS");
  }
  panel.n_steps = static_cast<int>(header.size()) - 1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(origin + " line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " cells, found " +
                               std::to_string(cells.size()));
    }
    panel.unit_ids.push_back(cells.front());
    cells.erase(cells.begin());
    panel.rows.push_back(std::move(cells));
  }
  if (panel.rows.empty()) throw std::runtime_error(origin + ": no data rows");
  return panel;
}

}  // namespace detail

inline void write_assignment_csv(const AssignmentMatrix& w, std::ostream& out) {
  out << "unit";
  for (int t = 1; t <= w.n_steps(); ++t) out << ",t" << t;
  out << "\n";
  for (int u = 0; u < w.n_units(); ++u) {
    out << (u + 1);
    for (int t = 0; t < w.n_steps(); ++t) out << ',' << static_cast<int>(w.values(u, t));
    out << "\n";
  }
}

inline AssignmentMatrix read_assignment_csv(std::istream& in, const std::string& origin = "csv") {
  const detail::CsvPanel panel = detail::read_csv_panel(in, origin);
  AssignmentMatrix w{Grid<std::uint8_t>(static_cast<int>(panel.rows.size()), panel.n_steps, 0),
                     std::nullopt, 0};
  for (std::size_t r = 0; r < panel.rows.size(); ++r) {
    for (int t = 0; t < panel.n_steps; ++t) {
      const std::string& cell = panel.rows[r][static_cast<std::size_t>(t)];
      if (cell == "0") continue;
      if (cell == "1") {
        w.values(static_cast<int>(r), t) = 1;
        continue;
      }
      throw std::runtime_error(origin + " line " + std::to_string(r + 2) + ", column " +
                               std::to_string(t + 2) + ": assignment cell must be 0 or 1 (got \"" +
                               cell + "\")");
    }
  }
  return w;
}

inline void write_outcome_csv(const OutcomeMatrix& y, std::ostream& out) {
  out << "unit";
  for (int t = 1; t <= y.n_steps(); ++t) out << ",t" << t;
  out << "\n";
  for (int u = 0; u < y.n_units(); ++u) {
    if (y.unit_ids.empty()) {
      out << (u + 1);
    } else {
      out << y.unit_ids[static_cast<std::size_t>(u)];
    }
    for (int t = 0; t < y.n_steps(); ++t) {
      out << ',' << detail::format_double(y.values(u, t));
    }
    out << "\n";
  }
}

inline OutcomeMatrix read_outcome_csv(std::istream& in, const std::string& origin = "csv") {
  const detail::CsvPanel panel = detail::read_csv_panel(in, origin);
  OutcomeMatrix y{Grid<double>(static_cast<int>(panel.rows.size()), panel.n_steps, 0.0),
                  panel.unit_ids};
  for (std::size_t r = 0; r < panel.rows.size(); ++r) {
    for (int t = 0; t < panel.n_steps; ++t) {
      const std::string& cell = panel.rows[r][static_cast<std::size_t>(t)];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw std::runtime_error(origin + " line " + std::to_string(r + 2) + ", column " +
                                 std::to_string(t + 2) +
                                 ": outcome cell must be a finite decimal (got \"" + cell + "\")");
      }
      y.values(static_cast<int>(r), t) = v;
    }
  }
  return y;
}

// Path-based convenience wrappers.

inline void write_assignment_csv(const AssignmentMatrix& w, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_assignment_csv(w, out);
}

inline AssignmentMatrix read_assignment_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_assignment_csv(in, path.filename().string());
}

inline void write_outcome_csv(const OutcomeMatrix& y, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_outcome_csv(y, out);
}

inline OutcomeMatrix read_outcome_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_outcome_csv(in, path.filename().string());
}

// ---------------------------------------------------------------------------
// Design specs and the CSV sidecar recording (spec, seed).
// ---------------------------------------------------------------------------

inline json design_to_json(const DesignSpec& spec) {
  json j{{"kind", to_string(spec.kind)},
         {"units", spec.n_units},
         {"steps", spec.n_steps},
         {"p", spec.p}};
  if (!spec.breakpoints.empty()) j["breakpoints"] = spec.breakpoints;
  if (!spec.weights.empty()) j["weights"] = spec.weights;
  return j;
}

inline DesignSpec design_from_json(const json& j) {
  DesignSpec spec;
  spec.kind = design_kind_from_string(j.at("kind").get<std::string>());
  spec.n_units = j.value("units", 0);
  spec.n_steps = j.value("steps", 0);
  spec.p = j.value("p", 0.5);
  if (j.contains("breakpoints")) spec.breakpoints = j["breakpoints"].get<std::vector<int>>();
  if (j.contains("weights")) spec.weights = j["weights"].get<std::vector<double>>();
  return spec;
}

inline json sidecar_to_json(const DesignSpec& spec, std::uint64_t seed) {
  return json{{"schema", schema_id("assignment_sidecar")},
              {"design", design_to_json(spec)},
              {"seed", seed}};
}

inline void write_sidecar_json(const AssignmentMatrix& w, const std::filesystem::path& path) {
  if (!w.spec) throw std::invalid_argument("assignment matrix carries no design spec");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << sidecar_to_json(*w.spec, w.seed).dump(2) << "\n";
}

inline std::pair<DesignSpec, std::uint64_t> read_sidecar_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j;
  in >> j;
  DesignSpec spec = design_from_json(j.at("design"));
  spec.validate();
  return {spec, j.value("seed", std::uint64_t{0})};
}

// ---------------------------------------------------------------------------
// Report serialization.
// ---------------------------------------------------------------------------

namespace detail {

// JSON has no literal for non-finite numbers; degenerate z statistics map to
// null.
inline json finite_or_null(double v) {
  if (std::isfinite(v)) return json(v);
  return json(nullptr);
}

}  // namespace detail

inline json to_json(const EstimateReport& r) {
  return json{{"schema", schema_id("estimate_report")},
              {"estimand", r.estimand},
              {"lag", r.lag},
              {"point", r.point},
              {"std_error", r.std_error},
              {"z", detail::finite_or_null(r.z)},
              {"p_value", r.p_value},
              {"ci_low", r.ci_low},
              {"ci_high", r.ci_high},
              {"alpha", r.alpha},
              {"n_units", r.n_units},
              {"n_steps_used", r.n_steps_used}};
}

inline json to_json(const WindowProbability& wp) {
  return json{{"schema", schema_id("window_probability")},
              {"design", design_to_json(wp.design)},
              {"lag", wp.lag},
              {"p_all_treated", wp.p_all_treated},
              {"p_all_control", wp.p_all_control}};
}

inline json to_json(const BreakpointSolution& sol) {
  return json{{"schema", schema_id("breakpoint_solution")},
              {"breakpoints", sol.breakpoints},
              {"objective_value", sol.objective_value},
              {"weights", sol.weights}};
}

inline json to_json(const stats::BoxSummary& b) {
  return json{{"min", b.min},
              {"whisker_low", b.whisker_low},
              {"q1", b.q1},
              {"median", b.median},
              {"q3", b.q3},
              {"whisker_high", b.whisker_high},
              {"max", b.max}};
}

inline json to_json(const SimulationCell& c) {
  json j{{"design", c.design},
         {"estimator", to_string(c.estimator)},
         {"me", c.me},
         {"mse", c.mse},
         {"reps", c.reps},
         {"alpha", c.alpha},
         {"sigma_hat", c.std_error},
         {"sigma_hat_summary", to_json(stats::box_summary(c.std_error))}};
  j["fpr"] = c.fpr ? json(*c.fpr) : json(nullptr);
  j["fnr"] = c.fnr ? json(*c.fnr) : json(nullptr);
  return j;
}

inline json to_json(const SimulationReport& r) {
  json cells = json::array();
  for (const SimulationCell& c : r.cells) cells.push_back(to_json(c));
  return json{{"schema", schema_id("simulation_report")},
              {"alpha", r.alpha},
              {"reps", r.reps},
              {"lag", r.lag},
              {"master_seed", r.master_seed},
              {"true_tau", r.true_tau},
              {"true_tau_lag", r.true_tau_lag},
              {"cells", cells}};
}

inline json to_json(const FrequencyTable& t) {
  return json{{"schema", schema_id("frequency_table")},
              {"coefficient", t.coefficient},
              {"exponent", t.exponent},
              {"value", t.value},
              {"count", t.count}};
}

// Tidy per-replicate rows for downstream plotting.
inline void write_replicate_csv(const SimulationReport& r, std::ostream& out) {
  out << "design,replicate,estimator,estimate,std_error,p_value\n";
  for (const SimulationCell& c : r.cells) {
    for (int rep = 0; rep < c.reps; ++rep) {
      out << c.design << ',' << (rep + 1) << ',' << to_string(c.estimator) << ','
          << detail::format_double(c.estimate[static_cast<std::size_t>(rep)]) << ','
          << detail::format_double(c.std_error[static_cast<std::size_t>(rep)]) << ','
          << detail::format_double(c.p_value[static_cast<std::size_t>(rep)]) << "\n";
    }
  }
}

inline void write_replicate_csv(const SimulationReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_replicate_csv(r, out);
}

// ---------------------------------------------------------------------------
// Scenario files driving `simulate`.
// ---------------------------------------------------------------------------

struct LognormalParams {
  int units = 0;
  int steps = 0;
  double mu = 2.4507;
  double sigma = 1.4764;
  double zero_frac = 0.7;
  double winsor_pct = 99.0;
  double jitter_sd_log = 0.1;
  std::uint64_t seed = 1;
};

struct Scenario {
  std::vector<DesignSpec> designs;
  std::vector<std::string> design_names;
  CarryoverModel model;
  int reps = 100;
  double alpha = 0.05;
  int lag = 1;
  bool run_tau = true;
  bool run_tau_lag = true;
  std::uint64_t master_seed = 0;
  std::optional<std::filesystem::path> base_csv;
  std::optional<LognormalParams> lognormal;
  std::optional<std::filesystem::path> out_report;
  std::optional<std::filesystem::path> out_replicates;
};

// Relative paths inside a scenario resolve against the scenario file's
// directory.
inline Scenario scenario_from_json(const json& j, const std::filesystem::path& base_dir = ".") {
  Scenario sc;
  if (!j.contains("designs") || !j["designs"].is_array() || j["designs"].empty()) {
    throw std::runtime_error("scenario needs a non-empty designs array");
  }
  for (const json& dj : j["designs"]) {
    sc.designs.push_back(design_from_json(dj));
    sc.design_names.push_back(dj.value("name", to_string(sc.designs.back().kind)));
  }
  sc.model.deltas = j.contains("model") ? j["model"].value("deltas", std::vector<double>{})
                                        : std::vector<double>{};
  sc.reps = j.value("reps", 100);
  sc.alpha = j.value("alpha", 0.05);
  sc.lag = j.value("lag", 1);
  if (j.contains("estimators")) {
    sc.run_tau = false;
    sc.run_tau_lag = false;
    for (const json& e : j["estimators"]) {
      const std::string name = e.get<std::string>();
      if (name == "tau") {
        sc.run_tau = true;
      } else if (name == "tau_lag") {
        sc.run_tau_lag = true;
      } else {
        throw std::runtime_error("unknown estimator \"" + name + "\" (expected tau|tau_lag)");
      }
    }
  }
  sc.master_seed = j.value("master_seed", std::uint64_t{0});
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  if (j.contains("base")) {
    const json& base = j["base"];
    if (base.contains("csv")) sc.base_csv = resolve(base["csv"].get<std::string>());
    if (base.contains("lognormal")) {
      const json& g = base["lognormal"];
      LognormalParams lp;
      lp.units = g.value("units", 0);
      lp.steps = g.value("steps", 0);
      lp.mu = g.value("mu", lp.mu);
      lp.sigma = g.value("sigma", lp.sigma);
      lp.zero_frac = g.value("zero_frac", lp.zero_frac);
      lp.winsor_pct = g.value("winsor_pct", lp.winsor_pct);
      lp.jitter_sd_log = g.value("jitter_sd_log", lp.jitter_sd_log);
      lp.seed = g.value("seed", lp.seed);
      sc.lognormal = lp;
    }
  }
  if (static_cast<bool>(sc.base_csv) == static_cast<bool>(sc.lognormal)) {
    throw std::runtime_error(
        "scenario base must name exactly one of base.csv or base.lognormal");
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    if (o.contains("report")) sc.out_report = resolve(o["report"].get<std::string>());
    if (o.contains("replicates_csv")) {
      sc.out_replicates = resolve(o["replicates_csv"].get<std::string>());
    }
  }
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

inline OutcomeMatrix scenario_base_panel(const Scenario& sc) {
  if (sc.base_csv) return read_outcome_csv(*sc.base_csv);
  const LognormalParams& lp = *sc.lognormal;
  return gen_lognormal_items(lp.units, lp.mu, lp.sigma, lp.zero_frac, lp.winsor_pct, lp.steps,
                             lp.seed, lp.jitter_sd_log);
}

// Designs in a scenario may omit units/steps; they inherit the panel shape.
inline MonteCarloConfig scenario_config(const Scenario& sc, const OutcomeMatrix& base,
                                        int threads) {
  MonteCarloConfig cfg;
  cfg.designs = sc.designs;
  for (DesignSpec& spec : cfg.designs) {
    if (spec.n_units == 0) spec.n_units = base.n_units();
    if (spec.n_steps == 0) spec.n_steps = base.n_steps();
  }
  cfg.design_labels = sc.design_names;
  cfg.model = sc.model;
  cfg.run_tau = sc.run_tau;
  cfg.run_tau_lag = sc.run_tau_lag;
  cfg.lag = sc.lag;
  cfg.reps = sc.reps;
  cfg.alpha = sc.alpha;
  cfg.master_seed = sc.master_seed;
  cfg.threads = threads;
  return cfg;
}

}  // namespace switchback
