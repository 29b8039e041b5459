#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "switchback/design.hpp"
#include "switchback/parallel.hpp"

namespace switchback {

// Minimax breakpoint placement for a horizon of S timesteps: K breakpoints
// beyond the fixed first one at timestep 1, under carryover order m.
struct BreakpointProblem {
  int n_steps = 0;         // S
  int n_breakpoints = 0;   // K, number of breakpoints beyond s0 = 1
  int carryover_order = 0; // m

  void validate() const {
    if (n_steps < 2) throw std::invalid_argument("horizon must have at least 2 timesteps");
    if (n_breakpoints < 1 || n_breakpoints >= n_steps) {
      throw std::invalid_argument("need 1 <= K < S (got K = " + std::to_string(n_breakpoints) +
                                  ", S = " + std::to_string(n_steps) + ")");
    }
    if (carryover_order < 0 || carryover_order >= n_steps) {
      throw std::invalid_argument("need 0 <= m < S (got m = " + std::to_string(carryover_order) +
                                  ")");
    }
  }
};

struct BreakpointSolution {
  std::vector<int> breakpoints;  // ordered, starts at 1
  double objective_value = 0.0;
  std::vector<double> weights;   // always [1/2, ..., 1/2], one per breakpoint
};

namespace detail {

// Worst-case variance proxy for a breakpoint set {1 = s_0 < ... < s_K}:
//   4 * sum_{k=0..K} (s_{k+1} - s_k)^2
//   + 8m (s_K - s_1) + 4 m^2 K - 4 m^2
//   + 4 * sum_{k=1..K-1} [(m - s_{k+1} + s_k)^+]^2
// with the sentinel s_{K+1} := S + 1 closing the final segment. All terms are
// integers, so the value is exact.
inline long long breakpoint_objective_ll(const std::vector<int>& ks, int m, int n_steps) {
  validate_breakpoints(ks, n_steps);
  if (ks.size() < 2) {
    throw std::invalid_argument("objective needs at least one breakpoint beyond timestep 1");
  }
  if (m < 0 || m >= n_steps) throw std::invalid_argument("need 0 <= m < S");
  const int last = static_cast<int>(ks.size()) - 1;  // K
  long long total = 0;
  for (int k = 0; k <= last; ++k) {
    const long long next = (k == last) ? n_steps + 1 : ks[static_cast<std::size_t>(k + 1)];
    const long long gap = next - ks[static_cast<std::size_t>(k)];
    total += 4 * gap * gap;
  }
  total += 8LL * m * (ks[static_cast<std::size_t>(last)] - ks[1]);
  total += 4LL * m * m * last - 4LL * m * m;
  for (int k = 1; k <= last - 1; ++k) {
    const long long shortfall =
        m - (ks[static_cast<std::size_t>(k + 1)] - ks[static_cast<std::size_t>(k)]);
    if (shortfall > 0) total += 4 * shortfall * shortfall;
  }
  return total;
}

inline long long choose_capped(int n, int k, long long cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long long result = 1;
  for (int i = 1; i <= k; ++i) {
    result = result * (n - k + i) / i;  // exact: partial products are binomials
    if (result > cap) return cap + 1;
  }
  return result;
}

// rank-th K-combination of {0..n-1} in lexicographic order (combinatorial
// number system); used to hand contiguous enumeration chunks to workers.
inline std::vector<int> unrank_combination(long long rank, int n, int k) {
  std::vector<int> combo(static_cast<std::size_t>(k));
  int value = 0;
  for (int slot = 0; slot < k; ++slot) {
    for (;; ++value) {
      const long long tail = choose_capped(n - value - 1, k - slot - 1,
                                           std::numeric_limits<long long>::max() / 2);
      if (rank < tail) break;
      rank -= tail;
    }
    combo[static_cast<std::size_t>(slot)] = value++;
  }
  return combo;
}

// Advances a K-combination of {0..n-1} to its lexicographic successor.
inline bool next_combination(std::vector<int>& combo, int n) {
  const int k = static_cast<int>(combo.size());
  for (int i = k - 1; i >= 0; --i) {
    if (combo[static_cast<std::size_t>(i)] < n - k + i) {
      ++combo[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j) {
        combo[static_cast<std::size_t>(j)] = combo[static_cast<std::size_t>(j - 1)] + 1;
      }
      return true;
    }
  }
  return false;
}

struct Candidate {
  long long value = std::numeric_limits<long long>::max();
  std::vector<int> ks;
};

}  // namespace detail

inline double breakpoint_objective(const std::vector<int>& breakpoints, int carryover_order,
                                   int n_steps) {
  return static_cast<double>(
      detail::breakpoint_objective_ll(breakpoints, carryover_order, n_steps));
}

enum class BreakpointMode { automatic, exhaustive, dynamic_programming };

namespace detail {

constexpr long long kExhaustiveCap = 10'000'000;

// Evaluates the literal objective on every K-subset of {2..S}. Enumeration is
// lexicographic and ties keep the earlier set, so the reported minimizer is
// the lexicographically smallest one. Chunks are reduced in order, which keeps
// that tie-break intact under parallel enumeration.
inline BreakpointSolution optimize_exhaustive(const BreakpointProblem& problem, int threads) {
  const int s = problem.n_steps;
  const int k = problem.n_breakpoints;
  const int m = problem.carryover_order;
  const long long total = choose_capped(s - 1, k, kExhaustiveCap);
  if (total > kExhaustiveCap) {
    throw std::invalid_argument("exhaustive search over C(" + std::to_string(s - 1) + "," +
                                std::to_string(k) + ") sets exceeds the 1e7 cap; use dp mode");
  }

  threads = resolve_threads(threads);
  const long long n_chunks = std::min<long long>(total, threads);
  const long long chunk = (total + n_chunks - 1) / n_chunks;
  std::vector<Candidate> best_per_chunk(static_cast<std::size_t>(n_chunks));

  parallel_for(static_cast<std::size_t>(n_chunks), threads, [&](std::size_t c) {
    const long long begin = static_cast<long long>(c) * chunk;
    const long long end = std::min(total, begin + chunk);
    std::vector<int> combo = unrank_combination(begin, s - 1, k);
    std::vector<int> ks(static_cast<std::size_t>(k) + 1);
    ks[0] = 1;
    Candidate best;
    for (long long r = begin; r < end; ++r) {
      for (int i = 0; i < k; ++i) {
        ks[static_cast<std::size_t>(i) + 1] = combo[static_cast<std::size_t>(i)] + 2;
      }
      const long long value = breakpoint_objective_ll(ks, m, s);
      if (value < best.value) {
        best.value = value;
        best.ks = ks;
      }
      if (r + 1 < end) next_combination(combo, s - 1);
    }
    best_per_chunk[c] = std::move(best);
  });

  Candidate best;
  for (const Candidate& c : best_per_chunk) {
    if (c.value < best.value) best = c;  // earlier chunk wins ties
  }
  return {best.ks, static_cast<double>(best.value),
          std::vector<double>(static_cast<std::size_t>(k) + 1, 0.5)};
}

// The objective decomposes over consecutive gaps: the first gap contributes
// 4(s_1 - 1)^2, each interior gap g = s_{k+1} - s_k contributes
// 4g^2 + 8mg + 4[(m - g)^+]^2, the sentinel gap 4(S + 1 - s_K)^2, and
// 4m^2(K - 1) is constant. A shortest path over (level, position) states is
// therefore exact. The backward pass stores suffix costs; the forward
// reconstruction always takes the smallest position that stays optimal, which
// yields the lexicographically smallest minimizer.
inline BreakpointSolution optimize_dp(const BreakpointProblem& problem) {
  const int s = problem.n_steps;
  const int k = problem.n_breakpoints;
  const long long m = problem.carryover_order;
  constexpr long long kInf = std::numeric_limits<long long>::max() / 4;

  const auto edge = [m](long long gap) {
    long long cost = 4 * gap * gap + 8 * m * gap;
    const long long shortfall = m - gap;
    if (shortfall > 0) cost += 4 * shortfall * shortfall;
    return cost;
  };

  // suffix[j][v]: cost of segments from the j-th chosen breakpoint at step v
  // (1-based, v in [2..S]) through the sentinel; positions above S are kInf.
  std::vector<std::vector<long long>> suffix(
      static_cast<std::size_t>(k) + 1, std::vector<long long>(static_cast<std::size_t>(s) + 1, kInf));
  for (int v = 2; v <= s; ++v) {
    const long long gap = s + 1 - v;
    suffix[static_cast<std::size_t>(k)][static_cast<std::size_t>(v)] = 4 * gap * gap;
  }
  for (int j = k - 1; j >= 1; --j) {
    for (int v = 2; v <= s; ++v) {
      long long best = kInf;
      for (int next = v + 1; next <= s; ++next) {
        const long long tail = suffix[static_cast<std::size_t>(j) + 1][static_cast<std::size_t>(next)];
        if (tail >= kInf) continue;
        best = std::min(best, edge(next - v) + tail);
      }
      suffix[static_cast<std::size_t>(j)][static_cast<std::size_t>(v)] = best;
    }
  }

  long long best = kInf;
  int first = -1;
  for (int v = 2; v <= s; ++v) {
    const long long tail = suffix[1][static_cast<std::size_t>(v)];
    if (tail >= kInf) continue;
    const long long gap0 = v - 1;
    const long long value = 4 * gap0 * gap0 + tail;
    if (value < best) {
      best = value;
      first = v;
    }
  }
  if (first < 0) throw std::invalid_argument("no feasible breakpoint placement");

  std::vector<int> ks(static_cast<std::size_t>(k) + 1);
  ks[0] = 1;
  ks[1] = first;
  for (int j = 1; j < k; ++j) {
    const int at = ks[static_cast<std::size_t>(j)];
    const long long need = suffix[static_cast<std::size_t>(j)][static_cast<std::size_t>(at)];
    for (int next = at + 1; next <= s; ++next) {
      const long long tail = suffix[static_cast<std::size_t>(j) + 1][static_cast<std::size_t>(next)];
      if (tail >= kInf) continue;
      if (edge(next - at) + tail == need) {
        ks[static_cast<std::size_t>(j) + 1] = next;
        break;
      }
    }
  }

  const long long constant = 4 * m * m * (k - 1);
  return {ks, static_cast<double>(best + constant),
          std::vector<double>(static_cast<std::size_t>(k) + 1, 0.5)};
}

}  // namespace detail

// Returns a global minimizer of the breakpoint objective. Exhaustive mode is
// gated at C(S-1, K) <= 1e7 candidate sets; dp mode handles anything larger.
// Ties are broken toward the lexicographically smallest set in both modes.
inline BreakpointSolution optimize_breakpoints(const BreakpointProblem& problem,
                                               BreakpointMode mode = BreakpointMode::automatic,
                                               int threads = 1) {
  problem.validate();
  if (mode == BreakpointMode::automatic) {
    const long long count = detail::choose_capped(problem.n_steps - 1, problem.n_breakpoints,
                                                  detail::kExhaustiveCap);
    mode = count > detail::kExhaustiveCap ? BreakpointMode::dynamic_programming
                                          : BreakpointMode::exhaustive;
  }
  return mode == BreakpointMode::exhaustive ? detail::optimize_exhaustive(problem, threads)
                                            : detail::optimize_dp(problem);
}

}  // namespace switchback
