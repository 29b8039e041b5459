#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "switchback/io.hpp"

namespace switchback {

namespace detail {

inline void emit_json(const json& j, const std::optional<std::string>& out_path) {
  if (out_path) {
    std::ofstream out(*out_path);
    if (!out) throw std::runtime_error("cannot open " + *out_path + " for writing");
    out << j.dump(2) << "\n";
  } else {
    std::cout << j.dump(2) << "\n";
  }
}

// Design-specific validation with messages naming the violated sums. 1-based
// rows/columns throughout.
inline std::vector<std::string> assignment_violations(const AssignmentMatrix& w,
                                                      const DesignSpec& spec) {
  std::vector<std::string> violations;
  const int n = w.n_units();
  const int s = w.n_steps();
  if (spec.n_units > 0 && spec.n_units != n) {
    violations.push_back("matrix has " + std::to_string(n) + " units but the spec says " +
                         std::to_string(spec.n_units));
  }
  if (spec.n_steps > 0 && spec.n_steps != s) {
    violations.push_back("matrix has " + std::to_string(s) + " timesteps but the spec says " +
                         std::to_string(spec.n_steps));
  }
  if (!violations.empty()) return violations;

  const auto row_sum = [&](int u) {
    long long sum = 0;
    for (int t = 0; t < s; ++t) sum += w.values(u, t);
    return sum;
  };
  const auto col_sum = [&](int t) {
    long long sum = 0;
    for (int u = 0; u < n; ++u) sum += w.values(u, t);
    return sum;
  };
  const auto row_constant = [&](int u) {
    for (int t = 1; t < s; ++t) {
      if (w.values(u, t) != w.values(u, 0)) return false;
    }
    return true;
  };

  switch (spec.kind) {
    case DesignKind::item_randomized: {
      const long long want = std::llround(spec.p * n);
      long long treated = 0;
      for (int u = 0; u < n; ++u) {
        if (!row_constant(u)) {
          violations.push_back("row " + std::to_string(u + 1) +
                               " is not constant over time (item-randomized rows must be)");
        } else if (w.values(u, 0)) {
          ++treated;
        }
      }
      if (violations.empty() && treated != want) {
        violations.push_back(std::to_string(treated) + " treated rows, expected p*N = " +
                             std::to_string(want));
      }
      break;
    }
    case DesignKind::switchback: {
      const long long want = std::llround(spec.p * s);
      long long treated = 0;
      for (int t = 0; t < s; ++t) {
        bool constant = true;
        for (int u = 1; u < n; ++u) {
          if (w.values(u, t) != w.values(0, t)) constant = false;
        }
        if (!constant) {
          violations.push_back("column " + std::to_string(t + 1) +
                               " is not constant across units (switchback columns must be)");
        } else if (w.values(0, t)) {
          ++treated;
        }
      }
      if (violations.empty() && treated != want) {
        violations.push_back(std::to_string(treated) + " treated columns, expected p*S = " +
                             std::to_string(want));
      }
      break;
    }
    case DesignKind::iid_multi_unit:
      break;  // any binary matrix is supported
    case DesignKind::regular_switchback: {
      std::size_t k = 1;
      for (int t = 1; t < s; ++t) {
        const bool is_breakpoint =
            k < spec.breakpoints.size() && spec.breakpoints[k] - 1 == t;
        if (is_breakpoint) {
          ++k;
          continue;
        }
        for (int u = 0; u < n; ++u) {
          if (w.values(u, t) != w.values(u, t - 1)) {
            violations.push_back("row " + std::to_string(u + 1) + " changes at timestep " +
                                 std::to_string(t + 1) + ", which is not a breakpoint");
          }
        }
      }
      break;
    }
    case DesignKind::rbsd: {
      const long long row_target = std::llround(spec.p * s);
      const long long col_target = std::llround(spec.p * n);
      for (int u = 0; u < n; ++u) {
        const long long sum = row_sum(u);
        if (sum != row_target) {
          violations.push_back("row " + std::to_string(u + 1) + " sums to " +
                               std::to_string(sum) + ", expected p*S = " +
                               std::to_string(row_target));
        }
      }
      for (int t = 0; t < s; ++t) {
        const long long sum = col_sum(t);
        if (sum != col_target) {
          violations.push_back("column " + std::to_string(t + 1) + " sums to " +
                               std::to_string(sum) + ", expected p*N = " +
                               std::to_string(col_target));
        }
      }
      break;
    }
  }
  return violations;
}

}  // namespace detail

// Command-line entry point. Exit codes: 0 success, 1 data/validation error,
// 2 usage error.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Treatment-assignment designs, exact exposure probabilities, Horvitz-Thompson "
               "effect estimates, breakpoint optimization, and Monte-Carlo evaluation for "
               "item-by-time experiments"};
  app.set_version_flag("--version", "switchback 1.0.0");
  app.require_subcommand(1);
  int exit_code = 0;

  // generate ----------------------------------------------------------------
  auto* generate = app.add_subcommand("generate", "Sample an assignment matrix as CSV");
  struct {
    std::string design;
    int units = 0;
    int steps = 0;
    double p = 0.5;
    std::vector<int> breakpoints;
    std::vector<double> weights;
    std::uint64_t seed = 0;
    std::optional<std::string> out;
    std::optional<std::string> sidecar;
  } gen;
  generate->add_option("--design", gen.design, "item|switchback|iid|regular|rbsd")->required();
  generate->add_option("--units", gen.units, "number of units N")->required();
  generate->add_option("--steps", gen.steps, "number of timesteps S")->required();
  generate->add_option("--p", gen.p, "treatment share in (0,1)")->capture_default_str();
  generate->add_option("--breakpoints", gen.breakpoints, "1-based breakpoints, first must be 1")
      ->delimiter(',');
  generate->add_option("--weights", gen.weights, "per-breakpoint treatment probabilities")
      ->delimiter(',');
  generate->add_option("--seed", gen.seed, "sampling seed")->capture_default_str();
  generate->add_option("--out", gen.out, "CSV output path (default: stdout)");
  generate->add_option("--sidecar", gen.sidecar,
                       "sidecar JSON path recording spec+seed (default: <out>.json)");
  generate->callback([&]() {
    DesignSpec spec{design_kind_from_string(gen.design), gen.units, gen.steps, gen.p,
                    gen.breakpoints, gen.weights};
    spec.validate();
    const AssignmentMatrix w = sample(spec, gen.seed);
    std::optional<std::string> sidecar = gen.sidecar;
    if (!sidecar && gen.out) sidecar = *gen.out + ".json";
    if (gen.out) {
      write_assignment_csv(w, std::filesystem::path(*gen.out));
    } else {
      write_assignment_csv(w, std::cout);
    }
    if (sidecar) write_sidecar_json(w, *sidecar);
    if (gen.out) {
      detail::emit_json(json{{"schema", schema_id("generate_result")},
                             {"csv", *gen.out},
                             {"sidecar", sidecar ? json(*sidecar) : json(nullptr)},
                             {"seed", gen.seed},
                             {"design", design_to_json(spec)}},
                        std::nullopt);
    }
  });

  // validate ----------------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "Check an assignment CSV against a design");
  struct {
    std::string input;
    std::optional<std::string> sidecar;
    std::string design;
    int units = 0;
    int steps = 0;
    double p = 0.5;
    std::vector<int> breakpoints;
    std::vector<double> weights;
    std::optional<std::string> out;
  } val;
  validate->add_option("--input", val.input, "assignment CSV to check")->required();
  validate->add_option("--sidecar", val.sidecar, "sidecar JSON carrying the design spec");
  validate->add_option("--design", val.design, "design kind when no sidecar is given");
  validate->add_option("--units", val.units, "expected N (0 = take from the CSV)");
  validate->add_option("--steps", val.steps, "expected S (0 = take from the CSV)");
  validate->add_option("--p", val.p, "treatment share")->capture_default_str();
  validate->add_option("--breakpoints", val.breakpoints, "1-based breakpoints")->delimiter(',');
  validate->add_option("--weights", val.weights, "per-breakpoint probabilities")->delimiter(',');
  validate->add_option("--out", val.out, "write the validation report here instead of stdout");
  validate->callback([&]() {
    const AssignmentMatrix w = read_assignment_csv(std::filesystem::path(val.input));
    DesignSpec spec;
    if (val.sidecar) {
      spec = read_sidecar_json(*val.sidecar).first;
    } else {
      if (val.design.empty()) {
        throw std::runtime_error("validate needs either --sidecar or --design");
      }
      spec.kind = design_kind_from_string(val.design);
      spec.n_units = val.units > 0 ? val.units : w.n_units();
      spec.n_steps = val.steps > 0 ? val.steps : w.n_steps();
      spec.p = val.p;
      spec.breakpoints = val.breakpoints;
      spec.weights = val.weights;
      spec.validate();
    }
    const std::vector<std::string> violations = detail::assignment_violations(w, spec);
    detail::emit_json(json{{"schema", schema_id("validation_report")},
                           {"input", val.input},
                           {"design", design_to_json(spec)},
                           {"valid", violations.empty()},
                           {"violations", violations}},
                      val.out);
    if (!violations.empty()) exit_code = 1;
  });

  // estimate ----------------------------------------------------------------
  auto* estimate = app.add_subcommand("estimate", "Horvitz-Thompson effect estimate from CSVs");
  struct {
    std::string assignment;
    std::string outcomes;
    std::string sidecar;
    int lag = -1;
    double alpha = 0.05;
    int threads = 0;
    std::optional<std::string> out;
  } est;
  estimate->add_option("--assignment", est.assignment, "assignment CSV")->required();
  estimate->add_option("--outcomes", est.outcomes, "outcome CSV")->required();
  estimate->add_option("--sidecar", est.sidecar, "design sidecar JSON")->required();
  estimate->add_option("--lag", est.lag,
                       "estimate the lag-L effect (omit for the plain average effect)");
  estimate->add_option("--alpha", est.alpha, "test level")->capture_default_str();
  estimate->add_option("--threads", est.threads, "worker threads (0 = available cores)");
  estimate->add_option("--out", est.out, "report path (default: stdout)");
  estimate->callback([&]() {
    AssignmentMatrix w = read_assignment_csv(std::filesystem::path(est.assignment));
    const OutcomeMatrix y = read_outcome_csv(std::filesystem::path(est.outcomes));
    const auto [spec, seed] = read_sidecar_json(est.sidecar);
    if (spec.n_units != w.n_units() || spec.n_steps != w.n_steps()) {
      throw std::runtime_error("sidecar design is " + std::to_string(spec.n_units) + "x" +
                               std::to_string(spec.n_steps) + " but the assignment CSV is " +
                               std::to_string(w.n_units()) + "x" + std::to_string(w.n_steps()));
    }
    w.spec = spec;
    w.seed = seed;
    const int threads = resolve_threads(est.threads);
    EstimateReport report;
    if (est.lag >= 0) {
      report = ht_tau_lag(w, y, est.lag, window_provider(spec, est.lag), est.alpha, threads);
    } else {
      report = ht_tau(w, y, marginal_provider(spec), est.alpha, threads);
    }
    json j = to_json(report);
    j["design"] = design_to_json(spec);
    j["assignment_seed"] = seed;
    detail::emit_json(j, est.out);
  });

  // simulate ------------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Run a Monte-Carlo scenario");
  struct {
    std::string scenario;
    std::optional<std::string> out;
    std::optional<std::string> replicate_csv;
    std::optional<std::uint64_t> seed;
    int threads = 0;
  } sim;
  simulate->add_option("--scenario", sim.scenario, "scenario JSON path")->required();
  simulate->add_option("--out", sim.out, "report path (default: scenario output.report or stdout)");
  simulate->add_option("--replicate-csv", sim.replicate_csv,
                       "per-replicate CSV path (default: scenario output.replicates_csv)");
  simulate->add_option("--seed", sim.seed, "override the scenario master seed");
  simulate->add_option("--threads", sim.threads, "worker threads (0 = available cores)");
  simulate->callback([&]() {
    Scenario sc = load_scenario(sim.scenario);
    if (sim.seed) sc.master_seed = *sim.seed;
    const OutcomeMatrix base = scenario_base_panel(sc);
    const MonteCarloConfig cfg = scenario_config(sc, base, resolve_threads(sim.threads));
    const SimulationReport report = monte_carlo(base, cfg);
    std::optional<std::string> out = sim.out;
    if (!out && sc.out_report) out = sc.out_report->string();
    detail::emit_json(to_json(report), out);
    std::optional<std::string> rep_csv = sim.replicate_csv;
    if (!rep_csv && sc.out_replicates) rep_csv = sc.out_replicates->string();
    if (rep_csv) write_replicate_csv(report, std::filesystem::path(*rep_csv));
  });

  // optimize-breakpoints ------------------------------------------------------
  auto* optimize = app.add_subcommand("optimize-breakpoints",
                                      "Minimax-optimal breakpoint placement");
  struct {
    int steps = 0;
    int breakpoints = 0;
    int carryover = 0;
    std::string mode = "auto";
    int threads = 0;
    std::optional<std::string> out;
  } opt;
  optimize->add_option("--steps", opt.steps, "horizon S")->required();
  optimize->add_option("--breakpoints", opt.breakpoints, "breakpoints K beyond timestep 1")
      ->required();
  optimize->add_option("--carryover", opt.carryover, "carryover order m")->required();
  optimize->add_option("--mode", opt.mode, "auto|exhaustive|dp")->capture_default_str();
  optimize->add_option("--threads", opt.threads, "worker threads (0 = available cores)");
  optimize->add_option("--out", opt.out, "solution path (default: stdout)");
  optimize->callback([&]() {
    BreakpointMode mode;
    if (opt.mode == "auto") {
      mode = BreakpointMode::automatic;
    } else if (opt.mode == "exhaustive") {
      mode = BreakpointMode::exhaustive;
    } else if (opt.mode == "dp") {
      mode = BreakpointMode::dynamic_programming;
    } else {
      throw std::runtime_error("unknown mode \"" + opt.mode + "\" (expected auto|exhaustive|dp)");
    }
    const BreakpointSolution sol = optimize_breakpoints(
        {opt.steps, opt.breakpoints, opt.carryover}, mode, resolve_threads(opt.threads));
    json j = to_json(sol);
    j["steps"] = opt.steps;
    j["carryover"] = opt.carryover;
    detail::emit_json(j, opt.out);
  });

  // probability ---------------------------------------------------------------
  auto* probability = app.add_subcommand("probability",
                                         "Exact all-treated/all-control window probabilities");
  struct {
    std::string design;
    int units = 2;
    int steps = 0;
    double p = 0.5;
    int lag = 1;
    std::vector<int> breakpoints;
    std::vector<double> weights;
    std::optional<std::string> out;
  } prob;
  probability->add_option("--design", prob.design, "item|switchback|iid|regular|rbsd")->required();
  probability->add_option("--steps", prob.steps, "number of timesteps S")->required();
  probability->add_option("--p", prob.p, "treatment share")->capture_default_str();
  probability->add_option("--lag", prob.lag, "window length is lag+1")->capture_default_str();
  probability->add_option("--units", prob.units, "number of units N")->capture_default_str();
  probability->add_option("--breakpoints", prob.breakpoints, "1-based breakpoints")
      ->delimiter(',');
  probability->add_option("--weights", prob.weights, "per-breakpoint probabilities")
      ->delimiter(',');
  probability->add_option("--out", prob.out, "output path (default: stdout)");
  probability->callback([&]() {
    DesignSpec spec{design_kind_from_string(prob.design), prob.units, prob.steps, prob.p,
                    prob.breakpoints, prob.weights};
    detail::emit_json(to_json(window_probs(spec, prob.lag)), prob.out);
  });

  // gen-data ------------------------------------------------------------------
  auto* gen_data = app.add_subcommand("gen-data", "Synthetic skewed base data");
  struct {
    std::string kind;
    int units = 10000;
    int steps = 14;
    double mu = 2.4507;
    double sigma = 1.4764;
    double zero_frac = 0.7;
    double winsor = 99.0;
    double jitter = 0.1;
    int users = 100000;
    double exponent = 2.5;
    double coefficient = 0.8;
    std::uint64_t seed = 0;
    std::optional<std::string> out;
  } gd;
  gen_data->add_option("--kind", gd.kind, "lognormal|powerlaw")->required();
  gen_data->add_option("--units", gd.units, "units for the lognormal panel")
      ->capture_default_str();
  gen_data->add_option("--steps", gd.steps, "timesteps for the lognormal panel")
      ->capture_default_str();
  gen_data->add_option("--mu", gd.mu, "log-mean")->capture_default_str();
  gen_data->add_option("--sigma", gd.sigma, "log-sd")->capture_default_str();
  gen_data->add_option("--zero-frac", gd.zero_frac, "share of all-zero units")
      ->capture_default_str();
  gen_data->add_option("--winsor", gd.winsor, "winsorizing percentile in (0,100]")
      ->capture_default_str();
  gen_data->add_option("--jitter", gd.jitter, "log-sd of day-over-day noise")
      ->capture_default_str();
  gen_data->add_option("--users", gd.users, "draws for the power-law table")
      ->capture_default_str();
  gen_data->add_option("--exponent", gd.exponent, "power-law exponent")->capture_default_str();
  gen_data->add_option("--coefficient", gd.coefficient, "reported power-law scale")
      ->capture_default_str();
  gen_data->add_option("--seed", gd.seed, "generator seed")->capture_default_str();
  gen_data->add_option("--out", gd.out, "output path (default: stdout)");
  gen_data->callback([&]() {
    if (gd.kind == "lognormal") {
      const OutcomeMatrix y = gen_lognormal_items(gd.units, gd.mu, gd.sigma, gd.zero_frac,
                                                  gd.winsor, gd.steps, gd.seed, gd.jitter);
      if (gd.out) {
        write_outcome_csv(y, std::filesystem::path(*gd.out));
      } else {
        write_outcome_csv(y, std::cout);
        return;
      }
      std::vector<double> positive;
      for (double v : y.values.data()) {
        if (v > 0.0) positive.push_back(v);
      }
      json summary{{"schema", schema_id("gen_data_summary")},
                   {"kind", "lognormal"},
                   {"csv", *gd.out},
                   {"units", gd.units},
                   {"steps", gd.steps},
                   {"mu", gd.mu},
                   {"sigma", gd.sigma},
                   {"zero_frac", gd.zero_frac},
                   {"winsor_pct", gd.winsor},
                   {"jitter_sd_log", gd.jitter},
                   {"seed", gd.seed},
                   {"positive_cells", positive.size()},
                   {"positive_mean", positive.empty() ? json(nullptr)
                                                      : json(stats::mean(positive))},
                   {"positive_skewness", positive.size() < 3
                                             ? json(nullptr)
                                             : json(stats::sample_skewness(positive))}};
      detail::emit_json(summary, std::nullopt);
    } else if (gd.kind == "powerlaw") {
      const FrequencyTable table =
          gen_powerlaw_users(gd.users, gd.coefficient, gd.exponent, gd.seed);
      json j = to_json(table);
      j["users"] = gd.users;
      j["seed"] = gd.seed;
      j["skewness"] = table_skewness(table);
      detail::emit_json(j, gd.out);
    } else {
      throw std::runtime_error("unknown --kind \"" + gd.kind +
                               "\" (expected lognormal|powerlaw)");
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}

}  // namespace switchback
