#include "switchback/probability.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "switchback/design.hpp"

using namespace switchback;

namespace {

// Enumerates every placement of `ones` ones in a length-`steps` row and counts
// how many place ones on all of positions {0..j}.
double enumerated_run_probability(int steps, int ones, int j) {
  std::vector<int> pos(static_cast<std::size_t>(ones));
  for (int i = 0; i < ones; ++i) pos[static_cast<std::size_t>(i)] = i;
  long long total = 0, covering = 0;
  for (;;) {
    ++total;
    bool covers = true;
    for (int w = 0; w <= j; ++w) {
      if (std::find(pos.begin(), pos.end(), w) == pos.end()) covers = false;
    }
    if (covers) ++covering;
    int i = ones - 1;
    while (i >= 0 && pos[static_cast<std::size_t>(i)] == steps - ones + i) --i;
    if (i < 0) break;
    ++pos[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < ones; ++k) {
      pos[static_cast<std::size_t>(k)] = pos[static_cast<std::size_t>(k - 1)] + 1;
    }
  }
  return static_cast<double>(covering) / static_cast<double>(total);
}

DesignSpec rbsd_spec(int n, int s) { return {DesignKind::rbsd, n, s, 0.5, {}, {}}; }

}  // namespace

TEST(RunProbability, MatchesTheClosedFormAtS14) {
  // (S-2)/(4(S-1)) at S=14 is 12/52
  EXPECT_EQ(run_probability(14, 0.5, 1), 12.0 / 52.0);
}

TEST(RunProbability, LagZeroGivesP) {
  for (int s : {2, 4, 6, 8, 12, 100, 10000}) {
    EXPECT_EQ(run_probability(s, 0.5, 0), 0.5);
  }
  EXPECT_EQ(run_probability(6, 1.0 / 3.0, 0), 1.0 / 3.0);
  EXPECT_EQ(run_probability(8, 0.25, 0), 0.25);
}

TEST(RunProbability, MatchesEnumerationAtS6) {
  // all C(6,3) = 20 patterns, ones at two fixed adjacent positions -> 4/20
  EXPECT_EQ(run_probability(6, 0.5, 1), 0.2);
  EXPECT_EQ(run_probability(6, 0.5, 1), enumerated_run_probability(6, 3, 1));
}

TEST(RunProbability, MonotoneNonIncreasingInLag) {
  double prev = 1.0;
  for (int j = 0; j <= 5; ++j) {
    const double cur = run_probability(10, 0.5, j);
    EXPECT_LE(cur, prev);
    prev = cur;
  }
  EXPECT_EQ(run_probability(10, 0.5, 5), 0.0);  // window of 6 > 5 ones
}

TEST(RunProbability, WindowLongerThanOnesIsZero) {
  EXPECT_EQ(run_probability(4, 0.5, 2), 0.0);
  EXPECT_EQ(run_probability(2, 0.5, 1), 0.0);
}

TEST(RunProbability, LargeHorizonDoesNotOverflow) {
  // falls back to the ratio product once integer intermediates would overflow
  const double v = run_probability(10000, 0.5, 60);
  EXPECT_GT(v, 0.0);
  EXPECT_LT(v, std::pow(0.5, 60));  // strictly below the iid bound
}

TEST(MarginalProb, PerDesign) {
  const DesignSpec item{DesignKind::item_randomized, 5, 6, 0.6, {}, {}};
  for (int u = 0; u < 5; ++u) {
    for (int t = 0; t < 6; ++t) EXPECT_EQ(marginal_prob(item, u, t), 0.6);
  }

  // coins at timesteps {1,4} with weights [0.3, 0.7]; timestep 5 (0-based 4)
  // is governed by the second coin
  const DesignSpec regular{DesignKind::regular_switchback, 2, 6, 0.5, {1, 4}, {0.3, 0.7}};
  EXPECT_EQ(marginal_prob(regular, 0, 4), 0.7);
  EXPECT_EQ(marginal_prob(regular, 0, 2), 0.3);
  EXPECT_EQ(marginal_prob(regular, 0, 3), 0.7);

  EXPECT_EQ(marginal_prob(rbsd_spec(2, 4), 1, 2), 0.5);
  EXPECT_THROW(marginal_prob(item, 5, 0), std::invalid_argument);
}

TEST(MarginalProb, RbsdMatchesPermutationEnumeration) {
  // all distinct arrangements of [1,1,0,0] are equally likely; 3 of the 6
  // place a one at any fixed position
  std::vector<int> row = {0, 0, 1, 1};
  int total = 0;
  std::vector<int> ones_at(4, 0);
  do {
    ++total;
    for (int t = 0; t < 4; ++t) ones_at[static_cast<std::size_t>(t)] += row[static_cast<std::size_t>(t)];
  } while (std::next_permutation(row.begin(), row.end()));
  ASSERT_EQ(total, 6);
  for (int t = 0; t < 4; ++t) {
    EXPECT_EQ(static_cast<double>(ones_at[static_cast<std::size_t>(t)]) / total,
              marginal_prob(rbsd_spec(2, 4), 0, t));
  }
}

TEST(WindowProbs, HandChosenCases) {
  // every-step coins at 1/2: two independent fair coins cover a lag-1 window
  DesignSpec regular{DesignKind::regular_switchback, 2, 6, 0.5, {1, 2, 3, 4, 5, 6},
                     std::vector<double>(6, 0.5)};
  const WindowProbability wp = window_probs(regular, 1);
  EXPECT_EQ(wp.p_all_treated, 0.25);
  EXPECT_EQ(wp.p_all_control, 0.25);

  const WindowProbability rbsd14 = window_probs(rbsd_spec(2, 14), 1);
  EXPECT_EQ(rbsd14.p_all_treated, 12.0 / 52.0);
  EXPECT_EQ(rbsd14.p_all_control, 12.0 / 52.0);

  // (S-2)/(4(S-1)) -> 1/4 as S grows
  const WindowProbability big = window_probs(rbsd_spec(2, 1000000), 1);
  EXPECT_NEAR(big.p_all_treated, 0.25, 1e-5);

  const DesignSpec item{DesignKind::item_randomized, 5, 6, 0.6, {}, {}};
  const WindowProbability wi = window_probs(item, 3);
  EXPECT_EQ(wi.p_all_treated, 0.6);
  EXPECT_EQ(wi.p_all_control, 0.4);

  const DesignSpec iid{DesignKind::iid_multi_unit, 2, 6, 0.5, {}, {}};
  EXPECT_EQ(window_probs(iid, 2).p_all_treated, 0.125);
}

TEST(WindowProbs, PositionDependentRegularDesignIsRejected) {
  const DesignSpec regular{DesignKind::regular_switchback, 2, 6, 0.5, {1, 4}, {0.3, 0.7}};
  EXPECT_THROW(window_probs(regular, 1), std::invalid_argument);
  // per-position probabilities are served; a window inside one segment shares
  // a single coin, so its probability is that coin's weight
  EXPECT_DOUBLE_EQ(window_prob_at(regular, 1, 2, true), 0.3);         // both steps on coin 0
  EXPECT_DOUBLE_EQ(window_prob_at(regular, 1, 3, true), 0.3 * 0.7);   // spans both coins
  EXPECT_DOUBLE_EQ(window_prob_at(regular, 1, 4, true), 0.7);
  EXPECT_DOUBLE_EQ(window_prob_at(regular, 1, 3, false), 0.7 * 0.3);
}

TEST(WindowProbs, DegenerateWindowIsRejected) {
  EXPECT_THROW(window_probs(rbsd_spec(2, 2), 1), std::invalid_argument);  // pS = 1
  EXPECT_THROW(window_probs(rbsd_spec(2, 4), 9), std::invalid_argument);  // longer than S
}

TEST(WindowProbs, SymmetricAtHalf) {
  for (int lag : {1, 2}) {
    const WindowProbability a = window_probs(rbsd_spec(2, 8), lag);
    EXPECT_EQ(a.p_all_treated, a.p_all_control);
    const WindowProbability b = window_probs({DesignKind::switchback, 2, 8, 0.5, {}, {}}, lag);
    EXPECT_EQ(b.p_all_treated, b.p_all_control);
    const WindowProbability c = window_probs({DesignKind::iid_multi_unit, 2, 8, 0.5, {}, {}}, lag);
    EXPECT_EQ(c.p_all_treated, c.p_all_control);
  }
}

TEST(WindowProbs, NeverExceedTheMarginal) {
  const std::vector<DesignSpec> specs = {
      {DesignKind::item_randomized, 4, 8, 0.5, {}, {}},
      {DesignKind::switchback, 4, 8, 0.5, {}, {}},
      {DesignKind::iid_multi_unit, 4, 8, 0.35, {}, {}},
      {DesignKind::regular_switchback, 4, 8, 0.5, {1, 3, 5, 7}, {0.4, 0.5, 0.6, 0.5}},
      rbsd_spec(4, 8),
  };
  for (const DesignSpec& spec : specs) {
    for (int lag : {1, 2, 3}) {
      for (int end = lag; end < spec.n_steps; ++end) {
        EXPECT_LE(window_prob_at(spec, lag, end, true), marginal_prob(spec, 0, end) + 1e-15);
      }
    }
  }
}

TEST(WindowProbs, MatchEmpiricalFrequencies) {
  // frequency of an all-treated / all-control window over 1e5 sampled
  // matrices, within 4 binomial standard errors
  const std::vector<DesignSpec> specs = {
      {DesignKind::item_randomized, 4, 6, 0.5, {}, {}},
      {DesignKind::switchback, 2, 6, 0.5, {}, {}},
      {DesignKind::iid_multi_unit, 2, 6, 0.4, {}, {}},
      {DesignKind::regular_switchback, 2, 6, 0.5, {1, 3, 5}, {0.5, 0.4, 0.6}},
      rbsd_spec(4, 6),
  };
  const int reps = 100000;
  const int lag = 1;
  for (const DesignSpec& spec : specs) {
    for (const int end : {lag, spec.n_steps - 1}) {
      const int unit = spec.n_units - 1;
      long long treated = 0, control = 0;
      for (int r = 0; r < reps; ++r) {
        const AssignmentMatrix w = sample(spec, static_cast<std::uint64_t>(r) * 31 + 7);
        bool all_ones = true, all_zeros = true;
        for (int t = end - lag; t <= end; ++t) {
          if (w.values(unit, t)) {
            all_zeros = false;
          } else {
            all_ones = false;
          }
        }
        treated += all_ones;
        control += all_zeros;
      }
      for (const bool is_treated : {true, false}) {
        const double expected = window_prob_at(spec, lag, end, is_treated);
        const double freq = static_cast<double>(is_treated ? treated : control) / reps;
        const double se = std::sqrt(expected * (1.0 - expected) / reps);
        EXPECT_NEAR(freq, expected, 4.0 * se)
            << to_string(spec.kind) << " end=" << end << " treated=" << is_treated;
      }
    }
  }
}
