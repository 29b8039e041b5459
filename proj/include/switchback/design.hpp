#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "switchback/grid.hpp"
#include "switchback/rng.hpp"

namespace switchback {

// The five supported treatment-assignment designs.
//
//   item_randomized     pN units drawn without replacement; their rows are
//                       all-ones, the rest all-zeros.
//   switchback          pS timesteps drawn without replacement; their columns
//                       are all-ones, the rest all-zeros.
//   iid_multi_unit      every cell is an independent Bernoulli(p) draw.
//   regular_switchback  one independent coin per breakpoint per unit; cells
//                       between breakpoints copy the last coin.
//   rbsd                regular balanced switchback: N/2 random permutations
//                       of a fixed vector with pS ones, stacked with their
//                       elementwise complements. Every sample is regular with
//                       breakpoints {1..S} and p-balanced.
enum class DesignKind { item_randomized, switchback, iid_multi_unit, regular_switchback, rbsd };

inline std::string to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::item_randomized: return "item";
    case DesignKind::switchback: return "switchback";
    case DesignKind::iid_multi_unit: return "iid";
    case DesignKind::regular_switchback: return "regular";
    case DesignKind::rbsd: return "rbsd";
  }
  throw std::invalid_argument("unknown design kind");
}

inline DesignKind design_kind_from_string(const std::string& s) {
  if (s == "item" || s == "item-randomized") return DesignKind::item_randomized;
  if (s == "switchback") return DesignKind::switchback;
  if (s == "iid" || s == "multi-unit") return DesignKind::iid_multi_unit;
  if (s == "regular" || s == "regular-switchback") return DesignKind::regular_switchback;
  if (s == "rbsd") return DesignKind::rbsd;
  throw std::invalid_argument("unknown design kind \"" + s +
                              "\" (expected item|switchback|iid|regular|rbsd)");
}

namespace detail {

inline bool near_integer(double x) {
  return std::fabs(x - std::llround(x)) <= 1e-9 * std::max(1.0, std::fabs(x));
}

inline long long integral_share(double p, int count, const std::string& what) {
  const double v = p * count;
  if (!near_integer(v)) {
    throw std::invalid_argument(what + " = " + std::to_string(v) +
                                " must be an integer (p = " + std::to_string(p) + ")");
  }
  return std::llround(v);
}

// Breakpoints are user-facing 1-based timesteps: first element 1, strictly
// increasing, all <= S.
inline void validate_breakpoints(const std::vector<int>& bp, int n_steps) {
  if (bp.empty()) throw std::invalid_argument("breakpoints must not be empty");
  if (bp.front() != 1) {
    throw std::invalid_argument("first breakpoint must be timestep 1 (got " +
                                std::to_string(bp.front()) + ")");
  }
  for (std::size_t k = 1; k < bp.size(); ++k) {
    if (bp[k] <= bp[k - 1]) {
      throw std::invalid_argument("breakpoints must be strictly increasing");
    }
  }
  if (bp.back() > n_steps) {
    throw std::invalid_argument("breakpoint " + std::to_string(bp.back()) +
                                " exceeds the number of timesteps " + std::to_string(n_steps));
  }
}

}  // namespace detail

// Parameterized description of one design. Weights apply to
// regular_switchback only; rbsd fixes all weights to p.
struct DesignSpec {
  DesignKind kind = DesignKind::iid_multi_unit;
  int n_units = 0;               // N
  int n_steps = 0;               // S
  double p = 0.5;                // treatment share
  std::vector<int> breakpoints;  // 1-based; regular_switchback (required), rbsd (optional {1..S})
  std::vector<double> weights;   // per-coin treatment probabilities, regular_switchback only

  // Throws std::invalid_argument naming the violated invariant.
  void validate() const {
    if (n_units < 1) throw std::invalid_argument("n_units must be positive");
    if (n_steps < 1) throw std::invalid_argument("n_steps must be positive");
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("p must lie strictly in (0,1), got " + std::to_string(p));
    }
    switch (kind) {
      case DesignKind::item_randomized:
        detail::integral_share(p, n_units, "p*n_units");
        break;
      case DesignKind::switchback:
        detail::integral_share(p, n_steps, "p*n_steps");
        break;
      case DesignKind::iid_multi_unit:
        break;
      case DesignKind::regular_switchback: {
        detail::validate_breakpoints(breakpoints, n_steps);
        if (weights.size() != breakpoints.size()) {
          throw std::invalid_argument("need one weight per breakpoint: " +
                                      std::to_string(breakpoints.size()) + " breakpoints vs " +
                                      std::to_string(weights.size()) + " weights");
        }
        for (double q : weights) {
          if (!(q > 0.0 && q < 1.0)) {
            throw std::invalid_argument("degenerate weight " + std::to_string(q) +
                                        "; weights must lie strictly inside (0,1)");
          }
        }
        break;
      }
      case DesignKind::rbsd: {
        if (n_units % 2 != 0) {
          throw std::invalid_argument("rbsd needs an even number of units, got " +
                                      std::to_string(n_units));
        }
        if (p != 0.5) {
          throw std::invalid_argument(
              "rbsd sampling is supported at p = 1/2 only (permutation rows carry weight p, "
              "complement rows 1-p; the two agree only at 1/2)");
        }
        detail::integral_share(p, n_steps, "p*n_steps");
        detail::integral_share(p, n_units, "p*n_units");
        for (double q : weights) {
          if (q != p) {
            throw std::invalid_argument("rbsd fixes every weight to p; got " +
                                        std::to_string(q));
          }
        }
        if (!breakpoints.empty()) {
          // rbsd re-randomizes at every step; anything else is not sampleable here
          if (static_cast<int>(breakpoints.size()) != n_steps) {
            throw std::invalid_argument("rbsd breakpoints must be {1..S} or omitted");
          }
          for (int k = 0; k < n_steps; ++k) {
            if (breakpoints[static_cast<std::size_t>(k)] != k + 1) {
              throw std::invalid_argument("rbsd breakpoints must be {1..S} or omitted");
            }
          }
        }
        break;
      }
    }
  }

  // Index of the coin governing a 0-based step (regular_switchback).
  int coin_index(int step) const {
    int k = 0;
    for (std::size_t i = 1; i < breakpoints.size(); ++i) {
      if (breakpoints[i] - 1 <= step) k = static_cast<int>(i);
    }
    return k;
  }
};

// N x S binary assignment grid together with the spec and seed that produced
// it. Matrices loaded from CSV carry no spec until a sidecar attaches one.
struct AssignmentMatrix {
  Grid<std::uint8_t> values;
  std::optional<DesignSpec> spec;
  std::uint64_t seed = 0;

  int n_units() const { return values.rows(); }
  int n_steps() const { return values.cols(); }
};

// Samples one assignment matrix. Deterministic: the same (spec, seed) yields
// a bit-identical matrix on every run and toolchain.
inline AssignmentMatrix sample(const DesignSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = spec.n_units;
  const int s = spec.n_steps;
  AssignmentMatrix out{Grid<std::uint8_t>(n, s, 0), spec, seed};
  Rng rng(seed);

  switch (spec.kind) {
    case DesignKind::item_randomized: {
      const int treated = static_cast<int>(detail::integral_share(spec.p, n, "p*n_units"));
      for (int u : rng.sample_without_replacement(n, treated)) {
        for (int t = 0; t < s; ++t) out.values(u, t) = 1;
      }
      break;
    }
    case DesignKind::switchback: {
      const int treated = static_cast<int>(detail::integral_share(spec.p, s, "p*n_steps"));
      for (int t : rng.sample_without_replacement(s, treated)) {
        for (int u = 0; u < n; ++u) out.values(u, t) = 1;
      }
      break;
    }
    case DesignKind::iid_multi_unit: {
      for (int u = 0; u < n; ++u) {
        for (int t = 0; t < s; ++t) {
          out.values(u, t) = rng.bernoulli(spec.p) ? 1 : 0;
        }
      }
      break;
    }
    case DesignKind::regular_switchback: {
      const int coins = static_cast<int>(spec.breakpoints.size());
      for (int u = 0; u < n; ++u) {
        int k = 0;
        std::uint8_t current = 0;
        for (int t = 0; t < s; ++t) {
          if (k < coins && spec.breakpoints[static_cast<std::size_t>(k)] - 1 == t) {
            current = rng.bernoulli(spec.weights[static_cast<std::size_t>(k)]) ? 1 : 0;
            ++k;
          }
          out.values(u, t) = current;
        }
      }
      break;
    }
    case DesignKind::rbsd: {
      const int ones = static_cast<int>(detail::integral_share(spec.p, s, "p*n_steps"));
      std::vector<std::uint8_t> base(static_cast<std::size_t>(s), 0);
      for (int t = 0; t < ones; ++t) base[static_cast<std::size_t>(t)] = 1;
      const int half = n / 2;
      for (int u = 0; u < half; ++u) {
        std::vector<std::uint8_t> row = base;
        rng.shuffle(row);
        for (int t = 0; t < s; ++t) {
          out.values(u, t) = row[static_cast<std::size_t>(t)];
          out.values(half + u, t) = static_cast<std::uint8_t>(1 - row[static_cast<std::size_t>(t)]);
        }
      }
      break;
    }
  }
  return out;
}

// True iff every row sums to pS and every column sums to pN.
inline bool check_balanced(const AssignmentMatrix& w, double p) {
  const int n = w.n_units();
  const int s = w.n_steps();
  if (n < 1 || s < 1) throw std::invalid_argument("empty assignment matrix");
  const long long row_target = detail::integral_share(p, s, "p*n_steps");
  const long long col_target = detail::integral_share(p, n, "p*n_units");
  for (int u = 0; u < n; ++u) {
    long long sum = 0;
    for (int t = 0; t < s; ++t) sum += w.values(u, t);
    if (sum != row_target) return false;
  }
  for (int t = 0; t < s; ++t) {
    long long sum = 0;
    for (int u = 0; u < n; ++u) sum += w.values(u, t);
    if (sum != col_target) return false;
  }
  return true;
}

// True iff every row is piecewise constant between consecutive breakpoints
// (the last segment runs to S). Breakpoints are 1-based.
inline bool check_regular(const AssignmentMatrix& w, const std::vector<int>& breakpoints) {
  detail::validate_breakpoints(breakpoints, w.n_steps());
  const int n = w.n_units();
  const int s = w.n_steps();
  for (int u = 0; u < n; ++u) {
    std::size_t k = 1;
    for (int t = 1; t < s; ++t) {
      if (k < breakpoints.size() && breakpoints[k] - 1 == t) {
        ++k;  // a new coin starts here; no constraint against the previous cell
        continue;
      }
      if (w.values(u, t) != w.values(u, t - 1)) return false;
    }
  }
  return true;
}

// Distribution oracle for tests: draws iid Bernoulli(p) matrices until one is
// p-balanced. Every balanced matrix has the same number of ones, so the
// accepted draw is uniform over the balanced space. Deliberately capped to
// tiny instances.
inline AssignmentMatrix sample_bsd_rejection_oracle(int n_units, int n_steps, double p,
                                                    std::uint64_t seed,
                                                    long long max_attempts = 1'000'000) {
  if (static_cast<long long>(n_units) * n_steps > 24) {
    throw std::invalid_argument("rejection oracle is restricted to N*S <= 24");
  }
  detail::integral_share(p, n_units, "p*n_units");
  detail::integral_share(p, n_steps, "p*n_steps");
  Rng rng(seed);
  for (long long attempt = 0; attempt < max_attempts; ++attempt) {
    AssignmentMatrix w{Grid<std::uint8_t>(n_units, n_steps, 0), std::nullopt, seed};
    for (int u = 0; u < n_units; ++u) {
      for (int t = 0; t < n_steps; ++t) {
        w.values(u, t) = rng.bernoulli(p) ? 1 : 0;
      }
    }
    if (check_balanced(w, p)) return w;
  }
  throw std::runtime_error("rejection oracle gave up after " + std::to_string(max_attempts) +
                           " attempts");
}

}  // namespace switchback
