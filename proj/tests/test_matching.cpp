#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "gemzsl/matching.hpp"
#include "gemzsl/rng.hpp"

using namespace gemzsl;

namespace {

CostMatrix random_costs(std::size_t n, Rng& rng, bool integral) {
  std::vector<double> v(n * n);
  for (auto& x : v) x = integral ? static_cast<double>(rng.below(10)) : rng.uniform(0.0, 10.0);
  return CostMatrix(n, std::move(v));
}

bool is_permutation_of_n(const std::vector<std::size_t>& perm) {
  std::set<std::size_t> seen(perm.begin(), perm.end());
  return seen.size() == perm.size() && (perm.empty() || *seen.rbegin() == perm.size() - 1);
}

}  // namespace

TEST(HungarianTest, SymmetricOptimumIsIdentity) {
  auto a = hungarian(CostMatrix::from_rows({{1, 2}, {2, 1}}));
  EXPECT_EQ(a.perm, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(a.total_cost, 2.0);
}

TEST(HungarianTest, SwapIsCheaper) {
  auto a = hungarian(CostMatrix::from_rows({{4, 1}, {2, 3}}));
  EXPECT_EQ(a.perm, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(a.total_cost, 3.0);
}

TEST(HungarianTest, SingleEntry) {
  auto a = hungarian(CostMatrix::from_rows({{0}}));
  EXPECT_EQ(a.perm, (std::vector<std::size_t>{0}));
  EXPECT_EQ(a.total_cost, 0.0);
}

TEST(HungarianTest, RejectsBadInput) {
  EXPECT_THROW(CostMatrix(2, {1, 2, 3}), UsageError);
  EXPECT_THROW(CostMatrix::from_rows({{1, 2}, {3}}), UsageError);
  EXPECT_THROW(CostMatrix(1, {std::numeric_limits<double>::infinity()}), UsageError);
  EXPECT_THROW(CostMatrix(1, {std::numeric_limits<double>::quiet_NaN()}), UsageError);
}

TEST(HungarianTest, TotalCostMatchesPermutation) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto cost = random_costs(1 + rng.below(7), rng, false);
    const auto a = hungarian(cost);
    ASSERT_TRUE(is_permutation_of_n(a.perm));
    EXPECT_EQ(a.total_cost, assignment_cost(cost, a.perm));
  }
}

TEST(BruteForceTest, SmallCases) {
  EXPECT_EQ(brute_force_assignment(CostMatrix::from_rows({{1, 2}, {2, 1}})).total_cost, 2.0);
  auto one = brute_force_assignment(CostMatrix::from_rows({{5}}));
  EXPECT_EQ(one.perm, (std::vector<std::size_t>{0}));
}

TEST(BruteForceTest, FactorialGuard) {
  EXPECT_THROW(brute_force_assignment(CostMatrix(9, std::vector<double>(81, 1.0))), UsageError);
  EXPECT_NO_THROW(brute_force_assignment(CostMatrix(8, std::vector<double>(64, 1.0))));
}

TEST(HungarianTest, AgreesWithBruteForceOnSevenBySeven) {
  Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    const auto cost = random_costs(7, rng, false);
    EXPECT_EQ(hungarian(cost).total_cost, brute_force_assignment(cost).total_cost);
  }
}

TEST(HungarianTest, AgreesWithBruteForceUnderTies) {
  Rng rng(78);
  for (int t = 0; t < 300; ++t) {
    const auto cost = random_costs(2 + rng.below(6), rng, true);
    EXPECT_EQ(hungarian(cost).total_cost, brute_force_assignment(cost).total_cost);
  }
}

TEST(HungarianTest, ConstantShiftMovesOptimumByNTimesConstant) {
  Rng rng(79);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(6);
    std::vector<double> v(n * n), shifted(n * n);
    const double c = static_cast<double>(rng.below(20));
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<double>(rng.below(50));
      shifted[i] = v[i] + c;
    }
    const auto base = hungarian(CostMatrix(n, v));
    const auto moved = hungarian(CostMatrix(n, shifted));
    EXPECT_EQ(moved.total_cost, base.total_cost + static_cast<double>(n) * c);
    EXPECT_EQ(assignment_cost(CostMatrix(n, v), moved.perm), base.total_cost);
  }
}
