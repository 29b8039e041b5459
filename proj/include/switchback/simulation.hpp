#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "switchback/design.hpp"
#include "switchback/estimation.hpp"
#include "switchback/grid.hpp"
#include "switchback/parallel.hpp"
#include "switchback/rng.hpp"
#include "switchback/stats.hpp"

namespace switchback {

// Linear additive treatment-effect model: delta[0] is the direct effect,
// delta[j] the j-th order carryover.
struct CarryoverModel {
  std::vector<double> deltas;

  int carryover_order() const {
    int order = 0;
    for (std::size_t j = 0; j < deltas.size(); ++j) {
      if (deltas[j] != 0.0) order = static_cast<int>(j);
    }
    return order;
  }
};

// Y[n][s] = base[n][s] + sum_j delta[j] * W[n][s-j]. Assignments before the
// experiment start are 0 (units were untreated before the first timestep), so
// the shifted assignment columns are zero-padded on the left.
inline OutcomeMatrix apply_carryover(const OutcomeMatrix& base, const AssignmentMatrix& w,
                                     const CarryoverModel& model) {
  if (base.n_units() != w.n_units() || base.n_steps() != w.n_steps()) {
    throw std::invalid_argument("base panel is " + std::to_string(base.n_units()) + "x" +
                                std::to_string(base.n_steps()) + " but assignments are " +
                                std::to_string(w.n_units()) + "x" + std::to_string(w.n_steps()));
  }
  for (double d : model.deltas) {
    if (!std::isfinite(d)) throw std::invalid_argument("carryover coefficients must be finite");
  }
  OutcomeMatrix out = base;
  const int n = base.n_units();
  const int s = base.n_steps();
  const int j_max = static_cast<int>(model.deltas.size()) - 1;
  for (int u = 0; u < n; ++u) {
    for (int t = 0; t < s; ++t) {
      double add = 0.0;
      const int reach = std::min(j_max, t);
      for (int j = 0; j <= reach; ++j) {
        if (w.values(u, t - j)) add += model.deltas[static_cast<std::size_t>(j)];
      }
      out.values(u, t) += add;
    }
  }
  return out;
}

struct TrueEffects {
  double tau = 0.0;
  double tau_lag = 0.0;
  int lag = 0;
};

// Evaluates the model under the all-ones and all-zeros assignment matrices and
// averages the differences: tau over s = 1..S, tau_lag over s = lag+1..S.
inline TrueEffects true_estimands(const OutcomeMatrix& base, const CarryoverModel& model,
                                  int lag) {
  const int n = base.n_units();
  const int s = base.n_steps();
  if (lag < 0 || lag >= s) throw std::invalid_argument("lag must satisfy 0 <= lag < S");
  AssignmentMatrix all_ones{Grid<std::uint8_t>(n, s, 1), std::nullopt, 0};
  AssignmentMatrix all_zeros{Grid<std::uint8_t>(n, s, 0), std::nullopt, 0};
  const OutcomeMatrix treated = apply_carryover(base, all_ones, model);
  const OutcomeMatrix control = apply_carryover(base, all_zeros, model);
  TrueEffects te;
  te.lag = lag;
  double full = 0.0, lagged = 0.0;
  for (int u = 0; u < n; ++u) {
    for (int t = 0; t < s; ++t) {
      const double diff = treated.values(u, t) - control.values(u, t);
      full += diff;
      if (t >= lag) lagged += diff;
    }
  }
  te.tau = full / (static_cast<double>(n) * s);
  te.tau_lag = lagged / (static_cast<double>(n) * (s - lag));
  return te;
}

// Synthetic item-level panel: each unit draws a log-normal baseline (or zero
// with probability zero_frac); per-timestep values multiply the baseline by
// log-normal(0, jitter_sd_log) day-over-day noise. The panel is then
// winsorized at the given percentile of its nonzero entries; winsor_pct = 100
// leaves it untouched.
inline OutcomeMatrix gen_lognormal_items(int n_units, double mean_log, double sd_log,
                                         double zero_frac, double winsor_pct, int n_steps,
                                         std::uint64_t seed, double jitter_sd_log = 0.1) {
  if (n_units < 1 || n_steps < 1) throw std::invalid_argument("panel dimensions must be positive");
  if (!(zero_frac >= 0.0 && zero_frac < 1.0)) {
    throw std::invalid_argument("zero_frac must lie in [0,1); 1 would make every row zero");
  }
  if (!(winsor_pct > 0.0 && winsor_pct <= 100.0)) {
    throw std::invalid_argument("winsor_pct must lie in (0,100]");
  }
  if (sd_log < 0.0 || jitter_sd_log < 0.0) {
    throw std::invalid_argument("scale parameters must be non-negative");
  }
  OutcomeMatrix out{Grid<double>(n_units, n_steps, 0.0), {}};
  Rng rng(seed);
  for (int u = 0; u < n_units; ++u) {
    const bool zero_row = rng.bernoulli(zero_frac);
    const double baseline = zero_row ? 0.0 : rng.lognormal(mean_log, sd_log);
    for (int t = 0; t < n_steps; ++t) {
      if (zero_row) continue;
      const double jitter = jitter_sd_log > 0.0 ? rng.lognormal(0.0, jitter_sd_log) : 1.0;
      out.values(u, t) = baseline * jitter;
    }
  }
  if (winsor_pct < 100.0) {
    std::vector<double> positive;
    positive.reserve(out.values.data().size());
    for (double v : out.values.data()) {
      if (v > 0.0) positive.push_back(v);
    }
    if (!positive.empty()) {
      const double cap = stats::quantile(positive, winsor_pct / 100.0);
      for (double& v : out.values.data()) v = std::min(v, cap);
    }
  }
  return out;
}

// Discrete counts with tail frequency proportional to x^(-exponent).
struct FrequencyTable {
  std::vector<long long> value;  // ascending distinct values
  std::vector<long long> count;
  double coefficient = 0.0;      // reported fit scale, echoed into outputs
  double exponent = 0.0;
};

// Samples n_users draws from the discrete power law P(X = x) ~ x^(-exponent)
// on {1..10^6} (the truncated tail mass is negligible for exponent > 1.5).
// The coefficient is the reported scale of the fitted curve; sampling always
// uses the normalized law.
inline FrequencyTable gen_powerlaw_users(int n_users, double coefficient, double exponent,
                                         std::uint64_t seed) {
  if (n_users < 1) throw std::invalid_argument("n_users must be positive");
  if (!(exponent > 1.0)) {
    throw std::invalid_argument("power-law exponent must exceed 1 for a normalizable law");
  }
  if (!(coefficient > 0.0)) throw std::invalid_argument("coefficient must be positive");
  constexpr int kSupportCap = 1'000'000;
  std::vector<double> cdf(static_cast<std::size_t>(kSupportCap));
  double total = 0.0;
  for (int x = 1; x <= kSupportCap; ++x) {
    total += std::pow(static_cast<double>(x), -exponent);
    cdf[static_cast<std::size_t>(x - 1)] = total;
  }
  Rng rng(seed);
  std::map<long long, long long> counts;
  for (int i = 0; i < n_users; ++i) {
    const double u = rng.uniform01() * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const long long x = static_cast<long long>(it - cdf.begin()) + 1;
    ++counts[std::min<long long>(x, kSupportCap)];
  }
  FrequencyTable table;
  table.coefficient = coefficient;
  table.exponent = exponent;
  for (const auto& [v, c] : counts) {
    table.value.push_back(v);
    table.count.push_back(c);
  }
  return table;
}

inline double table_skewness(const FrequencyTable& table) {
  std::vector<double> expanded;
  long long total = 0;
  for (long long c : table.count) total += c;
  expanded.reserve(static_cast<std::size_t>(total));
  for (std::size_t i = 0; i < table.value.size(); ++i) {
    for (long long c = 0; c < table.count[i]; ++c) {
      expanded.push_back(static_cast<double>(table.value[i]));
    }
  }
  return stats::sample_skewness(expanded);
}

enum class Estimator { tau, tau_lag };

inline std::string to_string(Estimator e) {
  return e == Estimator::tau ? "tau" : "tau_lag";
}

// One (design, estimator) cell of the Monte-Carlo study. Exactly one of
// fpr/fnr is populated, depending on whether the relevant true effect is zero.
// The per-replicate vectors are ordered by replicate index.
struct SimulationCell {
  std::string design;
  Estimator estimator = Estimator::tau;
  double me = 0.0;
  double mse = 0.0;
  std::optional<double> fpr;
  std::optional<double> fnr;
  int reps = 0;
  double alpha = 0.05;
  std::vector<double> estimate;
  std::vector<double> std_error;  // the sigma-hat sample across replicates
  std::vector<double> p_value;
};

struct SimulationReport {
  double alpha = 0.05;
  int reps = 0;
  int lag = 1;
  std::uint64_t master_seed = 0;
  double true_tau = 0.0;
  double true_tau_lag = 0.0;
  std::vector<SimulationCell> cells;
};

struct MonteCarloConfig {
  std::vector<DesignSpec> designs;
  std::vector<std::string> design_labels;  // optional; defaults to the kind name
  CarryoverModel model;
  bool run_tau = true;
  bool run_tau_lag = true;
  int lag = 1;
  int reps = 100;
  double alpha = 0.05;
  std::uint64_t master_seed = 0;
  int threads = 1;
};

namespace detail {

struct ReplicateResult {
  double est_tau = 0.0, se_tau = 0.0, p_tau = 1.0;
  double est_lag = 0.0, se_lag = 0.0, p_lag = 1.0;
};

struct DesignProbs {
  std::vector<double> marginal_by_step;
  std::vector<double> window_treated_by_end;
  std::vector<double> window_control_by_end;
};

}  // namespace detail

// Monte-Carlo evaluation protocol. For each replicate r of design d it samples
// W with a seed derived from (master_seed, d, r), synthesizes outcomes through
// the carryover model, runs the requested estimators with a z-test at level
// alpha, and aggregates ME / MSE / FPR / FNR against the true estimands.
// Replicates own their derived seeds and result slots, so the report is
// byte-identical at every thread count.
inline SimulationReport monte_carlo(const OutcomeMatrix& base, const MonteCarloConfig& cfg) {
  if (cfg.designs.empty()) throw std::invalid_argument("no designs given");
  if (cfg.reps < 1) throw std::invalid_argument("need at least one replicate");
  if (!cfg.run_tau && !cfg.run_tau_lag) throw std::invalid_argument("no estimators requested");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  if (cfg.lag < 0 || cfg.lag >= base.n_steps()) {
    throw std::invalid_argument("lag must satisfy 0 <= lag < S");
  }
  if (!cfg.design_labels.empty() && cfg.design_labels.size() != cfg.designs.size()) {
    throw std::invalid_argument("design_labels must match designs in length");
  }
  const int n_designs = static_cast<int>(cfg.designs.size());
  std::vector<detail::DesignProbs> probs(static_cast<std::size_t>(n_designs));
  for (int d = 0; d < n_designs; ++d) {
    const DesignSpec& spec = cfg.designs[static_cast<std::size_t>(d)];
    spec.validate();
    if (spec.n_units != base.n_units() || spec.n_steps != base.n_steps()) {
      throw std::invalid_argument("design " + std::to_string(d + 1) + " is " +
                                  std::to_string(spec.n_units) + "x" +
                                  std::to_string(spec.n_steps) + " but the base panel is " +
                                  std::to_string(base.n_units()) + "x" +
                                  std::to_string(base.n_steps()));
    }
    detail::DesignProbs& dp = probs[static_cast<std::size_t>(d)];
    if (cfg.run_tau) {
      dp.marginal_by_step.resize(static_cast<std::size_t>(spec.n_steps));
      for (int t = 0; t < spec.n_steps; ++t) {
        dp.marginal_by_step[static_cast<std::size_t>(t)] = marginal_prob(spec, 0, t);
      }
    }
    if (cfg.run_tau_lag) {
      dp.window_treated_by_end.assign(static_cast<std::size_t>(spec.n_steps), 0.0);
      dp.window_control_by_end.assign(static_cast<std::size_t>(spec.n_steps), 0.0);
      for (int end = cfg.lag; end < spec.n_steps; ++end) {
        dp.window_treated_by_end[static_cast<std::size_t>(end)] =
            window_prob_at(spec, cfg.lag, end, true);
        dp.window_control_by_end[static_cast<std::size_t>(end)] =
            window_prob_at(spec, cfg.lag, end, false);
      }
    }
  }

  const TrueEffects truth = true_estimands(base, cfg.model, cfg.lag);

  std::vector<detail::ReplicateResult> results(
      static_cast<std::size_t>(n_designs) * static_cast<std::size_t>(cfg.reps));
  parallel_for(results.size(), cfg.threads, [&](std::size_t slot) {
    const int d = static_cast<int>(slot / static_cast<std::size_t>(cfg.reps));
    const int r = static_cast<int>(slot % static_cast<std::size_t>(cfg.reps));
    const DesignSpec& spec = cfg.designs[static_cast<std::size_t>(d)];
    const detail::DesignProbs& dp = probs[static_cast<std::size_t>(d)];
    const std::uint64_t seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(d),
                                           static_cast<std::uint64_t>(r));
    const AssignmentMatrix w = sample(spec, seed);
    const OutcomeMatrix y = apply_carryover(base, w, cfg.model);
    detail::ReplicateResult& res = results[slot];
    if (cfg.run_tau) {
      const EstimateReport rep = ht_tau(
          w, y, [&](int, int t) { return dp.marginal_by_step[static_cast<std::size_t>(t)]; },
          cfg.alpha, 1);
      res.est_tau = rep.point;
      res.se_tau = rep.std_error;
      res.p_tau = rep.p_value;
    }
    if (cfg.run_tau_lag) {
      const EstimateReport rep = ht_tau_lag(
          w, y, cfg.lag,
          [&](int, int end, bool treated) {
            return treated ? dp.window_treated_by_end[static_cast<std::size_t>(end)]
                           : dp.window_control_by_end[static_cast<std::size_t>(end)];
          },
          cfg.alpha, 1);
      res.est_lag = rep.point;
      res.se_lag = rep.std_error;
      res.p_lag = rep.p_value;
    }
  });

  SimulationReport report;
  report.alpha = cfg.alpha;
  report.reps = cfg.reps;
  report.lag = cfg.lag;
  report.master_seed = cfg.master_seed;
  report.true_tau = truth.tau;
  report.true_tau_lag = truth.tau_lag;

  const auto aggregate = [&](int d, Estimator est) {
    SimulationCell cell;
    cell.design = cfg.design_labels.empty()
                      ? to_string(cfg.designs[static_cast<std::size_t>(d)].kind)
                      : cfg.design_labels[static_cast<std::size_t>(d)];
    cell.estimator = est;
    cell.reps = cfg.reps;
    cell.alpha = cfg.alpha;
    const double target = est == Estimator::tau ? truth.tau : truth.tau_lag;
    double err_sum = 0.0, err_sq_sum = 0.0;
    int rejections = 0;
    for (int r = 0; r < cfg.reps; ++r) {
      const detail::ReplicateResult& res =
          results[static_cast<std::size_t>(d) * static_cast<std::size_t>(cfg.reps) +
                  static_cast<std::size_t>(r)];
      const double estimate = est == Estimator::tau ? res.est_tau : res.est_lag;
      const double se = est == Estimator::tau ? res.se_tau : res.se_lag;
      const double pv = est == Estimator::tau ? res.p_tau : res.p_lag;
      cell.estimate.push_back(estimate);
      cell.std_error.push_back(se);
      cell.p_value.push_back(pv);
      const double err = estimate - target;
      err_sum += err;
      err_sq_sum += err * err;
      if (pv < cfg.alpha) ++rejections;
    }
    cell.me = err_sum / cfg.reps;
    cell.mse = err_sq_sum / cfg.reps;
    if (target == 0.0) {
      cell.fpr = static_cast<double>(rejections) / cfg.reps;
    } else {
      cell.fnr = static_cast<double>(cfg.reps - rejections) / cfg.reps;
    }
    report.cells.push_back(std::move(cell));
  };

  for (int d = 0; d < n_designs; ++d) {
    if (cfg.run_tau) aggregate(d, Estimator::tau);
    if (cfg.run_tau_lag) aggregate(d, Estimator::tau_lag);
  }
  return report;
}

// A/A study: the Monte-Carlo protocol with no injected effect, summarizing the
// spread of the estimated standard errors per design.
struct SigmaSummary {
  std::string design;
  stats::BoxSummary sigma_tau;
  stats::BoxSummary sigma_tau_lag;
};

inline std::vector<SigmaSummary> aa_study(const OutcomeMatrix& base,
                                          const std::vector<DesignSpec>& designs, int reps,
                                          int lag, std::uint64_t master_seed, int threads = 1) {
  MonteCarloConfig cfg;
  cfg.designs = designs;
  cfg.model = CarryoverModel{{}};
  cfg.lag = lag;
  cfg.reps = reps;
  cfg.master_seed = master_seed;
  cfg.threads = threads;
  const SimulationReport report = monte_carlo(base, cfg);
  std::vector<SigmaSummary> out;
  for (std::size_t d = 0; d < designs.size(); ++d) {
    SigmaSummary s;
    s.design = report.cells[2 * d].design;
    s.sigma_tau = stats::box_summary(report.cells[2 * d].std_error);
    s.sigma_tau_lag = stats::box_summary(report.cells[2 * d + 1].std_error);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace switchback
