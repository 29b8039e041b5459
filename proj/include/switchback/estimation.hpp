#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "switchback/design.hpp"
#include "switchback/grid.hpp"
#include "switchback/parallel.hpp"
#include "switchback/probability.hpp"
#include "switchback/stats.hpp"

namespace switchback {

// Point estimate with inference around it. For tau the window length is 1 and
// n_steps_used = S; for tau_lag(l) it is S - l.
struct EstimateReport {
  std::string estimand;  // "tau" or "tau_lag"
  int lag = 0;
  double point = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
  int n_units = 0;
  int n_steps_used = 0;
};

// Per-unit inverse-probability-weighted effect averages. Their mean equals the
// corresponding point estimate exactly.
struct UnitEffects {
  std::vector<double> values;
  std::optional<int> lag;  // empty for the unlagged estimator
};

namespace detail {

inline void check_dims(const AssignmentMatrix& w, const OutcomeMatrix& y) {
  if (w.n_units() != y.n_units() || w.n_steps() != y.n_steps()) {
    throw std::invalid_argument("assignment matrix is " + std::to_string(w.n_units()) + "x" +
                                std::to_string(w.n_steps()) + " but outcomes are " +
                                std::to_string(y.n_units()) + "x" +
                                std::to_string(y.n_steps()));
  }
}

inline void check_prob_open(double prob, const char* what) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw std::invalid_argument(std::string(what) + " = " + std::to_string(prob) +
                                " violates the estimator precondition P in (0,1)");
  }
}

}  // namespace detail

// ITE_n: per-unit average of W/P(W=1) * Y - (1-W)/P(W=0) * Y. probs(n, s) must
// return P(W_{n,s} = 1); indices 0-based. Units are independent slots, so the
// parallel pass is deterministic at any thread count.
template <class MarginalProbs>
UnitEffects unit_effects(const AssignmentMatrix& w, const OutcomeMatrix& y, MarginalProbs&& probs,
                         int threads = 1) {
  detail::check_dims(w, y);
  const int n = w.n_units();
  const int s = w.n_steps();
  UnitEffects fx{std::vector<double>(static_cast<std::size_t>(n), 0.0), std::nullopt};
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t u) {
    const int unit = static_cast<int>(u);
    double acc = 0.0;
    for (int t = 0; t < s; ++t) {
      const double prob = probs(unit, t);
      detail::check_prob_open(prob, "P(W=1)");
      const double outcome = y.values(unit, t);
      if (w.values(unit, t)) {
        acc += outcome / prob;
      } else {
        acc -= outcome / (1.0 - prob);
      }
    }
    fx.values[u] = acc / static_cast<double>(s);
  });
  return fx;
}

// Lagged ITE_n^(l): a timestep contributes only when the trailing window of
// lag+1 assignments is all-ones (weight 1/P(all ones)) or all-zeros (weight
// -1/P(all zeros)). probs(n, end_step, treated) supplies those probabilities.
template <class WindowProbs>
UnitEffects unit_effects(const AssignmentMatrix& w, const OutcomeMatrix& y, int lag,
                         WindowProbs&& probs, int threads = 1) {
  detail::check_dims(w, y);
  if (lag < 0 || lag + 1 > w.n_steps()) {
    throw std::invalid_argument("lag " + std::to_string(lag) + " needs a window of " +
                                std::to_string(lag + 1) + " steps but the horizon is " +
                                std::to_string(w.n_steps()));
  }
  const int n = w.n_units();
  const int s = w.n_steps();
  UnitEffects fx{std::vector<double>(static_cast<std::size_t>(n), 0.0), lag};
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t u) {
    const int unit = static_cast<int>(u);
    double acc = 0.0;
    int ones_run = 0;   // length of the trailing all-ones run ending at t
    int zeros_run = 0;  // same for zeros
    for (int t = 0; t < s; ++t) {
      if (w.values(unit, t)) {
        ++ones_run;
        zeros_run = 0;
      } else {
        ++zeros_run;
        ones_run = 0;
      }
      if (t < lag) continue;
      const double outcome = y.values(unit, t);
      if (ones_run >= lag + 1) {
        const double prob = probs(unit, t, true);
        detail::check_prob_open(prob, "P(window all-treated)");
        acc += outcome / prob;
      } else if (zeros_run >= lag + 1) {
        const double prob = probs(unit, t, false);
        detail::check_prob_open(prob, "P(window all-control)");
        acc -= outcome / prob;
      }
    }
    fx.values[u] = acc / static_cast<double>(s - lag);
  });
  return fx;
}

// sqrt( 1/(N(N-1)) * sum_n (ITE_n - mean)^2 ); applies identically to lagged
// effects.
inline double std_error(const UnitEffects& fx) {
  const std::size_t n = fx.values.size();
  if (n < 2) throw std::invalid_argument("standard error needs at least 2 units");
  const double m = stats::mean(fx.values);
  double ss = 0.0;
  for (double v : fx.values) ss += (v - m) * (v - m);
  return std::sqrt(ss / (static_cast<double>(n) * static_cast<double>(n - 1)));
}

// Two-sided one-sample z-test of point = 0. The degenerate (0, 0) case is
// p = 1 by convention; a nonzero point with zero standard error is rejected.
inline std::pair<double, double> one_sample_ztest(double point, double std_err) {
  if (std_err < 0.0) throw std::invalid_argument("standard error must be non-negative");
  if (std_err == 0.0) {
    if (point == 0.0) return {0.0, 1.0};
    throw std::invalid_argument("z-test undefined: nonzero point with zero standard error");
  }
  const double z = point / std_err;
  return {z, stats::two_sided_p(z)};
}

// Two-sided two-sample z-test comparing two means.
inline std::pair<double, double> two_sample_ztest(double mean_t, double mean_c, double se_t,
                                                  double se_c) {
  if (se_t < 0.0 || se_c < 0.0) throw std::invalid_argument("standard errors must be non-negative");
  const double combined = std::sqrt(se_t * se_t + se_c * se_c);
  if (combined == 0.0) {
    if (mean_t == mean_c) return {0.0, 1.0};
    throw std::invalid_argument("z-test undefined: distinct means with zero standard errors");
  }
  const double z = (mean_t - mean_c) / combined;
  return {z, stats::two_sided_p(z)};
}

namespace detail {

inline EstimateReport assemble_report(const UnitEffects& fx, const char* estimand, int lag,
                                      int n_steps_used, double alpha) {
  EstimateReport r;
  r.estimand = estimand;
  r.lag = lag;
  r.alpha = alpha;
  r.n_units = static_cast<int>(fx.values.size());
  r.n_steps_used = n_steps_used;
  r.point = stats::mean(fx.values);
  // A single unit leaves the across-unit dispersion unobservable; the
  // standard error is reported as 0 and the test degenerates accordingly.
  r.std_error = fx.values.size() >= 2 ? std_error(fx) : 0.0;
  if (r.std_error > 0.0) {
    r.z = r.point / r.std_error;
    r.p_value = stats::two_sided_p(r.z);
  } else if (r.point == 0.0) {
    r.z = 0.0;
    r.p_value = 1.0;
  } else {
    r.z = r.point > 0.0 ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
  }
  const double zq = stats::normal_quantile(1.0 - alpha / 2.0);
  r.ci_low = r.point - zq * r.std_error;
  r.ci_high = r.point + zq * r.std_error;
  return r;
}

}  // namespace detail

// Horvitz-Thompson estimate of the average treatment effect.
template <class MarginalProbs>
EstimateReport ht_tau(const AssignmentMatrix& w, const OutcomeMatrix& y, MarginalProbs&& probs,
                      double alpha = 0.05, int threads = 1) {
  const UnitEffects fx = unit_effects(w, y, std::forward<MarginalProbs>(probs), threads);
  return detail::assemble_report(fx, "tau", 0, w.n_steps(), alpha);
}

// Horvitz-Thompson estimate of the lag-l average causal effect.
template <class WindowProbs>
EstimateReport ht_tau_lag(const AssignmentMatrix& w, const OutcomeMatrix& y, int lag,
                          WindowProbs&& probs, double alpha = 0.05, int threads = 1) {
  const UnitEffects fx = unit_effects(w, y, lag, std::forward<WindowProbs>(probs), threads);
  return detail::assemble_report(fx, "tau_lag", lag, w.n_steps() - lag, alpha);
}

// Exposure classes of an observation given (previous, current) assignment.
enum class Exposure {
  direct_and_carryover,  // treated now and one step ago
  direct_only,
  carryover_only,
  no_exposure,
};

inline Exposure classify_exposure(bool prev_treated, bool cur_treated) {
  if (prev_treated && cur_treated) return Exposure::direct_and_carryover;
  if (cur_treated) return Exposure::direct_only;
  if (prev_treated) return Exposure::carryover_only;
  return Exposure::no_exposure;
}

// Exposure-mapping route to the same contrast: classify each observation from
// step 2 on by its (previous, current) assignment pair and take the
// inverse-probability-weighted difference of the fully-exposed and unexposed
// classes, on the per-(unit,timestep) scale. Numerically identical to
// ht_tau_lag with lag 1.
template <class WindowProbs>
EstimateReport exposure_mapping_estimate(const AssignmentMatrix& w, const OutcomeMatrix& y,
                                         WindowProbs&& probs, double alpha = 0.05) {
  detail::check_dims(w, y);
  if (w.n_steps() < 2) {
    throw std::invalid_argument("exposure mapping needs at least 2 timesteps");
  }
  const int n = w.n_units();
  const int s = w.n_steps();
  UnitEffects fx{std::vector<double>(static_cast<std::size_t>(n), 0.0), 1};
  for (int unit = 0; unit < n; ++unit) {
    double acc = 0.0;
    for (int t = 1; t < s; ++t) {
      const Exposure e =
          classify_exposure(w.values(unit, t - 1) != 0, w.values(unit, t) != 0);
      if (e == Exposure::direct_and_carryover) {
        const double prob = probs(unit, t, true);
        detail::check_prob_open(prob, "P(exposure d11)");
        acc += y.values(unit, t) / prob;
      } else if (e == Exposure::no_exposure) {
        const double prob = probs(unit, t, false);
        detail::check_prob_open(prob, "P(exposure d00)");
        acc -= y.values(unit, t) / prob;
      }
    }
    fx.values[static_cast<std::size_t>(unit)] = acc / static_cast<double>(s - 1);
  }
  return detail::assemble_report(fx, "tau_lag", 1, s - 1, alpha);
}

// Probability providers derived from a design spec. Tables are precomputed so
// the per-cell lookups inside the estimators stay cheap.
inline auto marginal_provider(const DesignSpec& spec) {
  spec.validate();
  std::vector<double> by_step(static_cast<std::size_t>(spec.n_steps));
  for (int t = 0; t < spec.n_steps; ++t) {
    by_step[static_cast<std::size_t>(t)] = marginal_prob(spec, 0, t);
  }
  return [by_step = std::move(by_step)](int, int step) {
    return by_step[static_cast<std::size_t>(step)];
  };
}

inline auto window_provider(const DesignSpec& spec, int lag) {
  spec.validate();
  if (lag < 0 || lag + 1 > spec.n_steps) {
    throw std::invalid_argument("lag " + std::to_string(lag) +
                                " does not fit the design horizon");
  }
  std::vector<double> treated(static_cast<std::size_t>(spec.n_steps), 0.0);
  std::vector<double> control(static_cast<std::size_t>(spec.n_steps), 0.0);
  for (int end = lag; end < spec.n_steps; ++end) {
    treated[static_cast<std::size_t>(end)] = window_prob_at(spec, lag, end, true);
    control[static_cast<std::size_t>(end)] = window_prob_at(spec, lag, end, false);
  }
  return [treated = std::move(treated), control = std::move(control)](int, int end_step,
                                                                      bool is_treated) {
    return is_treated ? treated[static_cast<std::size_t>(end_step)]
                      : control[static_cast<std::size_t>(end_step)];
  };
}

}  // namespace switchback
