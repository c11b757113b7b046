#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "lexicol/random.hpp"

using namespace lexicol::rng;

TEST(CounterRng, MatchesReferenceSplitMixSequence) {
  // Published SplitMix64 outputs for state 0.
  EXPECT_EQ(bits(0, 0), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(bits(0, 1), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(bits(0, 2), 0x06C45D188009454FULL);
}

TEST(CounterRng, StreamIsRandomAccess) {
  Stream s(12345);
  std::vector<std::uint64_t> seq;
  for (int i = 0; i < 10; ++i) seq.push_back(s.next_bits());
  EXPECT_EQ(s.position(), 10u);
  Stream jumped(12345, 7);
  EXPECT_EQ(jumped.next_bits(), seq[7]);
  EXPECT_EQ(bits(12345, 3), seq[3]);
}

TEST(CounterRng, DerivedKeysSeparateDomains) {
  std::set<std::uint64_t> keys;
  for (std::uint64_t seed = 0; seed < 4; ++seed)
    for (std::uint64_t d = 1; d <= 6; ++d)
      for (std::uint64_t sub = 0; sub < 4; ++sub) keys.insert(derive_key(seed, {d, sub}));
  EXPECT_EQ(keys.size(), 4u * 6u * 4u);
  EXPECT_NE(derive_key(1, {2, 3}), derive_key(1, {3, 2}));
  EXPECT_EQ(derive_key(9, {label(Domain::kDropout), 4}), derive_key(9, {5, 4}));
}

TEST(CounterRng, UnitDrawsCoverHalfOpenInterval) {
  EXPECT_EQ(to_unit(0), 0.0);
  EXPECT_LT(to_unit(~0ULL), 1.0);
  EXPECT_EQ(to_unit(1ULL << 63), 0.5);
  Stream s(77);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = s.next_unit();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // Mean of U(0,1) has sd 1/sqrt(12 n).
  EXPECT_NEAR(sum / n, 0.5, 4.0 / std::sqrt(12.0 * n));
}

TEST(CounterRng, BoundedDrawsAreUniform) {
  EXPECT_EQ(to_below(~0ULL, 10), 9u);
  EXPECT_EQ(to_below(0, 10), 0u);
  Stream s(5);
  const int bins = 7, n = 70000;
  std::vector<int> count(bins, 0);
  for (int i = 0; i < n; ++i) ++count[s.next_below(bins)];
  const double p = 1.0 / bins, sd = std::sqrt(n * p * (1 - p));
  for (int c : count) EXPECT_NEAR(c, n * p, 4 * sd);
}
