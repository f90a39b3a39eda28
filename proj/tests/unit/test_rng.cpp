#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <vector>

#include "xbf/rng.hpp"

namespace xbf {
namespace {

TEST(Rng, SplitmixMatchesReferenceSequence) {
  // Reference outputs of splitmix64 seeded with 0.
  std::uint64_t s = 0;
  EXPECT_EQ(splitmix64(s), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(splitmix64(s), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(splitmix64(s), 0x06c45d188009454fULL);
}

TEST(Rng, DeriveSeedFollowsItsDefinition) {
  for (std::uint64_t seed : {0ULL, 1ULL, 12345ULL}) {
    for (std::uint64_t stream : {0ULL, 7ULL, 1ULL << 40}) {
      std::uint64_t s = seed;
      const std::uint64_t a = splitmix64(s);
      s = a ^ stream;
      EXPECT_EQ(derive_seed(seed, stream), splitmix64(s));
    }
  }
}

TEST(Rng, DerivedStreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(3, i));
  EXPECT_EQ(seen.size(), 10000U);
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a(), b());
    EXPECT_EQ(a.uniform(), b.uniform());
  }
}

TEST(Rng, UniformRanges) {
  Rng rng(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = rng.uniform_open();
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Rng, BelowIsUniformChiSquare) {
  Rng rng(2);
  const std::uint64_t k = 7;
  const int n = 70000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    const auto v = rng.below(k);
    ASSERT_LT(v, k);
    ++counts[v];
  }
  double chi = 0.0;
  const double e = static_cast<double>(n) / k;
  for (int c : counts) chi += (c - e) * (c - e) / e;
  EXPECT_LT(chi, 22.46);  // chi-square(6) upper 0.001 point
  EXPECT_EQ(rng.below(1), 0U);
}

TEST(Rng, GumbelMeanIsEulerGamma) {
  Rng rng(3);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += rng.gumbel();
  // Var = pi^2 / 6, so the standard error is about 0.0029.
  EXPECT_NEAR(sum / n, std::numbers::egamma, 0.015);
}

TEST(Rng, ShuffleIsAPermutationAndSeeded) {
  std::vector<int> a(50);
  std::iota(a.begin(), a.end(), 0);
  auto b = a;
  Rng r1(9);
  Rng r2(9);
  shuffle(std::span<int>(a), r1);
  shuffle(std::span<int>(b), r2);
  EXPECT_EQ(a, b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

}  // namespace
}  // namespace xbf
