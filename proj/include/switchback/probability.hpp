#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "switchback/design.hpp"

namespace switchback {

// Probability that a fixed window of lag+1 consecutive timesteps is all-ones
// when a row carries exactly pS ones in uniformly random order:
// C(pS, lag+1) / C(S, lag+1). This is also the all-treated window probability
// of the plain switchback design (timesteps drawn without replacement).
//
// Evaluated as the ratio product prod_i (pS - i) / (S - i). The product is
// accumulated in exact integer arithmetic with stepwise gcd reduction while it
// fits; only past 2^53 does it fall back to floating point, so desk-scale
// values are exact.
inline double run_probability(int n_steps, double p, int lag) {
  if (n_steps < 1) throw std::invalid_argument("run_probability: n_steps must be positive");
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("run_probability: p must lie strictly in (0,1)");
  }
  if (lag < 0) throw std::invalid_argument("run_probability: lag must be non-negative");
  const long long ones = detail::integral_share(p, n_steps, "p*n_steps");
  const long long window = static_cast<long long>(lag) + 1;
  if (window > ones) return 0.0;  // window longer than the total number of ones

  constexpr std::uint64_t kExactCap = 1ull << 53;
  std::uint64_t num = 1, den = 1;
  bool exact = true;
  for (long long i = 0; i < window && exact; ++i) {
    std::uint64_t a = static_cast<std::uint64_t>(ones - i);
    std::uint64_t b = static_cast<std::uint64_t>(n_steps - i);
    std::uint64_t g = std::gcd(a, den);
    a /= g;
    den /= g;
    g = std::gcd(b, num);
    b /= g;
    num /= g;
    if (num > kExactCap / std::max<std::uint64_t>(a, 1) ||
        den > kExactCap / std::max<std::uint64_t>(b, 1)) {
      exact = false;
      break;
    }
    num *= a;
    den *= b;
    g = std::gcd(num, den);
    num /= g;
    den /= g;
  }
  if (exact) return static_cast<double>(num) / static_cast<double>(den);

  double prob = 1.0;
  for (long long i = 0; i < window; ++i) {
    prob *= static_cast<double>(ones - i) / static_cast<double>(n_steps - i);
  }
  return prob;
}

namespace detail {

inline void check_indices(const DesignSpec& spec, int unit, int step) {
  if (unit < 0 || unit >= spec.n_units) {
    throw std::invalid_argument("unit index " + std::to_string(unit) + " out of range [0," +
                                std::to_string(spec.n_units) + ")");
  }
  if (step < 0 || step >= spec.n_steps) {
    throw std::invalid_argument("step index " + std::to_string(step) + " out of range [0," +
                                std::to_string(spec.n_steps) + ")");
  }
}

}  // namespace detail

// P(W_{unit,step} = 1) under the design. Indices are 0-based.
inline double marginal_prob(const DesignSpec& spec, int unit, int step) {
  detail::check_indices(spec, unit, step);
  switch (spec.kind) {
    case DesignKind::item_randomized:
    case DesignKind::switchback:
    case DesignKind::iid_multi_unit:
      return spec.p;
    case DesignKind::regular_switchback:
      return spec.weights[static_cast<std::size_t>(spec.coin_index(step))];
    case DesignKind::rbsd:
      return 0.5;  // each row is a uniform permutation of pS = S/2 ones
  }
  throw std::invalid_argument("unknown design kind");
}

// Probability that the window of lag+1 steps ending at end_step (0-based) is
// all-treated (treated=true) or all-control (treated=false). Position matters
// only for regular_switchback, where the answer is the product of the
// distinct coin weights covering the window.
inline double window_prob_at(const DesignSpec& spec, int lag, int end_step, bool treated) {
  if (lag < 0) throw std::invalid_argument("lag must be non-negative");
  if (end_step < lag || end_step >= spec.n_steps) {
    throw std::invalid_argument("window [" + std::to_string(end_step - lag) + "," +
                                std::to_string(end_step) + "] does not fit in [0," +
                                std::to_string(spec.n_steps) + ")");
  }
  switch (spec.kind) {
    case DesignKind::item_randomized:
      // rows are constant, so the window is all-treated iff the unit is treated
      return treated ? spec.p : 1.0 - spec.p;
    case DesignKind::switchback:
      return run_probability(spec.n_steps, treated ? spec.p : 1.0 - spec.p, lag);
    case DesignKind::iid_multi_unit:
      return std::pow(treated ? spec.p : 1.0 - spec.p, lag + 1);
    case DesignKind::regular_switchback: {
      const int k_lo = spec.coin_index(end_step - lag);
      const int k_hi = spec.coin_index(end_step);
      double prob = 1.0;
      for (int k = k_lo; k <= k_hi; ++k) {
        const double q = spec.weights[static_cast<std::size_t>(k)];
        prob *= treated ? q : 1.0 - q;
      }
      return prob;
    }
    case DesignKind::rbsd:
      // symmetric at p = 1/2: complement rows swap the roles of 1s and 0s
      return run_probability(spec.n_steps, 0.5, lag);
  }
  throw std::invalid_argument("unknown design kind");
}

// Exact probabilities of an all-treated / all-control window of length lag+1,
// when they do not depend on where the window sits.
struct WindowProbability {
  DesignSpec design;
  int lag = 0;
  double p_all_treated = 0.0;
  double p_all_control = 0.0;
};

inline WindowProbability window_probs(const DesignSpec& spec, int lag) {
  spec.validate();
  if (lag < 0 || lag + 1 > spec.n_steps) {
    throw std::invalid_argument("window length " + std::to_string(lag + 1) +
                                " exceeds the horizon of " + std::to_string(spec.n_steps) +
                                " timesteps");
  }
  WindowProbability wp{spec, lag, window_prob_at(spec, lag, lag, true),
                       window_prob_at(spec, lag, lag, false)};
  if (spec.kind == DesignKind::regular_switchback) {
    for (int end = lag + 1; end < spec.n_steps; ++end) {
      if (window_prob_at(spec, lag, end, true) != wp.p_all_treated ||
          window_prob_at(spec, lag, end, false) != wp.p_all_control) {
        throw std::invalid_argument(
            "window probability varies with position for this breakpoint set; query "
            "window_prob_at per step instead");
      }
    }
  }
  if (!(wp.p_all_treated > 0.0 && wp.p_all_treated < 1.0) ||
      !(wp.p_all_control > 0.0 && wp.p_all_control < 1.0)) {
    throw std::invalid_argument("window probabilities for lag " + std::to_string(lag) +
                                " are degenerate under this design (must lie strictly in (0,1))");
  }
  return wp;
}

}  // namespace switchback
