#include <gtest/gtest.h>

#include "oracles/exhaustive.hpp"
#include "rulegame/counting.hpp"

using namespace rulegame;

namespace {

// Counts boards with exactly K pieces by brute-force enumeration.
long enumerate_configs(int length, int pieces, int colors) {
  long n = 0;
  for (const auto& b : oracle::all_boards(length, pieces, colors)) {
    int k = 0;
    for (char ch : b) k += ch != '.';
    n += k == pieces;
  }
  return n;
}

} // namespace

TEST(CountInitialConfigs, Examples) {
  EXPECT_EQ(count_initial_configs(7, 7, 1), 1);
  EXPECT_EQ(count_initial_configs(20, 5, 2), 496128);
  EXPECT_EQ(count_initial_configs(6, 3, 2), 160);
  EXPECT_EQ(count_initial_configs(6, 3, 2), enumerate_configs(6, 3, 2));
  EXPECT_EQ(count_initial_configs(5, 0, 3), 1);
}

TEST(CountInitialConfigs, MatchesEnumerationUpToSixCells) {
  for (int length = 1; length <= 6; ++length)
    for (int k = 1; k <= length; ++k)
      for (int c = 1; c <= 3; ++c)
        EXPECT_EQ(count_initial_configs(length, k, c), enumerate_configs(length, k, c))
            << length << " " << k << " " << c;
}

TEST(CountInitialConfigs, RejectsBadArguments) {
  EXPECT_THROW(count_initial_configs(3, 4, 2), std::invalid_argument);
  EXPECT_THROW(count_initial_configs(3, 1, 0), std::invalid_argument);
}

TEST(RuleSpaceUpperBound, Examples) {
  EXPECT_EQ(rule_space_upper_bound(1, 1), 2);
  EXPECT_EQ(rule_space_upper_bound(3, 1), 48);
  const BigInt expected("2804945043828031313032881257840640000");
  EXPECT_EQ(rule_space_upper_bound(20, 3), expected);
  EXPECT_EQ(scientific(expected), "2.80e36");
}

TEST(Scientific, Rounding) {
  EXPECT_EQ(scientific(BigInt(7)), "7.00e0");
  EXPECT_EQ(scientific(BigInt(99960)), "1.00e5");
  EXPECT_EQ(scientific(BigInt(12345), 2), "1.2e4");
  EXPECT_EQ(scientific(BigInt(496128), 4), "4.961e5");
  EXPECT_EQ(scientific(BigInt(-2500), 1), "-3e3");
}
