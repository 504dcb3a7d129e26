#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gemzsl/gem.hpp"
#include "gemzsl/gradcheck.hpp"
#include "support.hpp"

using namespace gemzsl;
using gemzsl::testing::grad_vector;
using gemzsl::testing::random_tensor;
using gemzsl::testing::to_vector;

using TD = Tensor<double>;

namespace {

double channel_sum(const TD& maps, std::size_t k) {
  const std::size_t kk = maps.dim(2), hw = maps.dim(0) * maps.dim(1);
  double s = 0.0;
  for (std::size_t p = 0; p < hw; ++p) s += maps[p * kk + k];
  return s;
}

TD permute_channels(const TD& t, const std::vector<std::size_t>& perm) {
  const std::size_t d = t.dim(2), hw = t.dim(0) * t.dim(1);
  std::vector<double> out(t.size());
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < d; ++c) out[p * d + c] = t[p * d + perm[c]];
  return TD(t.shape(), out);
}

}  // namespace

TEST(AttentionTest, HandExample) {
  TD query({1, 2}, {1, 0});
  TD key({1, 2, 2}, {2, 0, 0, 2});
  auto a = attention(query, key);
  EXPECT_EQ(a.shape(), (Shape{1, 2, 1}));
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(a[0], e2 / (e2 + 1), 1e-15);
  EXPECT_NEAR(a[1], 1 / (e2 + 1), 1e-15);
}

TEST(AttentionTest, ZeroKeyIsUniform) {
  Rng rng(1);
  auto a = attention(random_tensor({3, 4}, rng), TD::zeros({2, 3, 4}));
  for (double v : a.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 6.0);
}

TEST(AttentionTest, DoublingOneQueryChangesOnlyItsChannel) {
  Rng rng(2);
  auto q = random_tensor({3, 4}, rng);
  auto key = random_tensor({2, 2, 4}, rng);
  auto q2v = to_vector(q);
  for (std::size_t j = 0; j < 4; ++j) q2v[4 + j] *= 2.0;
  auto a = attention(q, key), b = attention(TD({3, 4}, q2v), key);
  bool changed = false;
  for (std::size_t p = 0; p < 4; ++p) {
    EXPECT_EQ(a[p * 3 + 0], b[p * 3 + 0]);
    EXPECT_EQ(a[p * 3 + 2], b[p * 3 + 2]);
    changed = changed || a[p * 3 + 1] != b[p * 3 + 1];
  }
  EXPECT_TRUE(changed);
}

TEST(AttentionTest, ChannelMismatch) {
  EXPECT_THROW(attention(TD::zeros({2, 3}), TD::zeros({2, 2, 4})), DimensionError);
}

TEST(AttentionTest, MapsAreDistributionsOnRandomInputs) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = 2 + rng.below(4), w = 1 + rng.below(4), c = 1 + rng.below(8),
                      k = 1 + rng.below(6);
    auto a = attention(random_tensor({k, c}, rng, -3, 3), random_tensor({h, w, c}, rng, 0, 3));
    for (double v : a.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    for (std::size_t ch = 0; ch < k; ++ch) ASSERT_NEAR(channel_sum(a, ch), 1.0, 1e-9);
  }
}

TEST(DistanceLossTest, OneHotChannelContributesZero) {
  TD a({2, 2, 1}, {0, 0, 1, 0});
  EXPECT_EQ(distance_loss(a).item(), 0.0);
}

TEST(DistanceLossTest, HandValue) {
  EXPECT_NEAR(distance_loss(TD({2, 2, 1}, {0.7, 0.1, 0.1, 0.1})).item(), 0.4, 1e-15);
}

TEST(DistanceLossTest, SumsOverChannels) {
  TD a({2, 2, 2}, {0.7, 0.7, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  EXPECT_NEAR(distance_loss(a).item(), 0.8, 1e-15);
  EXPECT_NEAR(distance_loss(a, true).item(), 0.4, 1e-15);
}

TEST(DistanceLossTest, NonNegativeAndZeroOnlyForOneHot) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = attention(random_tensor({3, 4}, rng, -2, 2), random_tensor({3, 3, 4}, rng, 0, 2));
    EXPECT_GT(distance_loss(a).item(), 0.0);
  }
  std::vector<double> onehot(9 * 2, 0.0);
  onehot[4 * 2 + 0] = 1.0;
  onehot[8 * 2 + 1] = 1.0;
  EXPECT_EQ(distance_loss(TD({3, 3, 2}, onehot)).item(), 0.0);
}

TEST(DistanceLossTest, GradientIsTheCoefficientField) {
  TD a({2, 3, 1}, {0.1, 0.2, 0.3, 0.15, 0.05, 0.2}, true);  // argmax at (0,2)
  backward(distance_loss(a));
  EXPECT_EQ(grad_vector(a), (std::vector<double>{4, 1, 0, 5, 2, 1}));
}

TEST(DistanceLossTest, FirstCellWinsTies) {
  TD a({2, 2, 1}, {0.4, 0.1, 0.4, 0.1}, true);
  backward(distance_loss(a));
  EXPECT_EQ(grad_vector(a), (std::vector<double>{0, 1, 1, 2}));
}

TEST(LocalizeTest, Cases) {
  EXPECT_DOUBLE_EQ(localize_attributes(TD::full({4, 4, 1}, 1.0 / 16)).item(), 1.0 / 16);
  std::vector<double> onehot(16, 0.0);
  onehot[5] = 1.0;
  EXPECT_EQ(localize_attributes(TD({4, 4, 1}, onehot)).item(), 1.0);
  EXPECT_EQ(localize_attributes(TD({2, 2, 1}, {0.7, 0.1, 0.1, 0.1})).item(), 0.7);
}

TEST(MseLossTest, Cases) {
  EXPECT_EQ(mse_loss(TD({3}, {1, 0, 0.5}), TD({3}, {1, 0, 0.5})).item(), 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(TD({2}, {0.5, 0.5}), TD({2}, {1, 0})).item(), 0.5);
  EXPECT_DOUBLE_EQ(mse_loss(TD({3}, {0.5, 0.5, 0}), TD({3}, {1, 0, 0})).item(), 0.5);
  EXPECT_THROW(mse_loss(TD::zeros({2}), TD::zeros({3})), DimensionError);
}

TEST(TransitionTest, Cases) {
  auto g = attention_transition(TD({1, 1, 1}, {0.0}), TD({1, 1, 1, 1}, {1.0}), TD({1}, {0.0}));
  EXPECT_DOUBLE_EQ(g.item(), 0.5);
  Rng rng(5);
  auto zero = attention_transition(random_tensor({3, 3, 4}, rng), TD::zeros({1, 1, 4, 2}), TD::zeros({2}));
  for (double v : zero.values()) EXPECT_DOUBLE_EQ(v, 0.5);
  auto mixed = attention_transition(TD({1, 1, 2}, {0.3, 0.7}), TD({1, 1, 2, 1}, {1, 1}), TD::zeros({1}));
  EXPECT_NEAR(mixed.item(), 0.7310586, 1e-7);
  EXPECT_THROW(attention_transition(TD::zeros({2, 2, 3}), TD::zeros({1, 1, 4, 2}), TD::zeros({2})),
               DimensionError);
  EXPECT_THROW(attention_transition(TD::zeros({2, 2, 3}), TD::zeros({3, 3, 3, 2}), TD::zeros({2})),
               DimensionError);
}

TEST(TransitionTest, OutputsStrictlyInsideUnitInterval) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = attention_transition(random_tensor({4, 4, 5}, rng, 0, 1), random_tensor({1, 1, 5, 3}, rng, -5, 5),
                                  random_tensor({3}, rng, -5, 5));
    for (double v : g.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(GazeLossTest, HalfEverywhereIsLnTwo) {
  EXPECT_NEAR(gaze_loss(TD::full({2, 2, 3}, 0.5), TD::full({2, 2, 3}, 0.5)).item(), std::log(2.0), 1e-15);
}

TEST(GazeLossTest, SingleCell) {
  EXPECT_NEAR(gaze_loss(TD({1, 1, 1}, {0.9}), TD({1, 1, 1}, {1.0})).item(), 0.105361, 1e-6);
}

TEST(GazeLossTest, ShapeMismatch) {
  EXPECT_THROW(gaze_loss(TD::full({2, 2, 2}, 0.5), TD::full({2, 2, 3}, 0.5)), DimensionError);
}

TEST(GazeLossTest, MatchesChannelsBeforeBce) {
  // Ground truth is the prediction with channels swapped: the matching undoes it.
  TD g({1, 2, 2}, {0.9, 0.2, 0.3, 0.8});
  TD truth({1, 2, 2}, {0.2, 0.9, 0.8, 0.3});
  const double expected = binary_cross_entropy(g, permute_channels(truth, {1, 0})).item();
  EXPECT_DOUBLE_EQ(gaze_loss(g, truth).item(), expected);
  EXPECT_LT(expected, binary_cross_entropy(g, truth).item());
}

TEST(GazeLossTest, InvariantToEveryChannelPermutation) {
  Rng rng(7);
  for (std::size_t d = 1; d <= 5; ++d) {
    for (int pair = 0; pair < 5; ++pair) {
      auto g = random_tensor({3, 3, d}, rng, 0.05, 0.95);
      auto truth = random_tensor({3, 3, d}, rng, 0.0, 1.0);
      const double base = gaze_loss(g, truth).item();
      std::vector<std::size_t> perm(d);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      do {
        EXPECT_EQ(gaze_loss(g, permute_channels(truth, perm)).item(), base);
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
}

TEST(GemGradTest, LossesPassFiniteDifferences) {
  Rng rng(8);
  auto q = random_tensor({3, 4}, rng, -1, 1, true);
  auto key = random_tensor({2, 2, 4}, rng, 0, 1, true);
  auto w = random_tensor({1, 1, 3, 2}, rng, -1, 1, true);
  auto b = random_tensor({2}, rng, -0.5, 0.5, true);
  auto truth = random_tensor({2, 2, 2}, rng, 0, 1);
  auto phi = TD({3}, {1, 0, 1});
  auto dis = finite_diff_check([&] { return distance_loss(attention(q, key)); }, {q, key});
  auto mse = finite_diff_check([&] { return mse_loss(localize_attributes(attention(q, key)), phi); },
                               {q, key});
  auto gaze = finite_diff_check(
      [&] { return gaze_loss(attention_transition(attention(q, key), w, b), truth); }, {q, key, w, b});
  EXPECT_LE(dis.max_rel_error, 1e-5);
  EXPECT_LE(mse.max_rel_error, 1e-5);
  EXPECT_LE(gaze.max_rel_error, 1e-5);
  EXPECT_GT(dis.checked + mse.checked + gaze.checked, 0u);
}

TEST(GazeCostTest, EntriesAreL1Distances) {
  std::vector<double> pred{0.1, 0.9, 0.2, 0.8};   // 2 cells x 2 channels
  std::vector<double> truth{1.0, 0.0, 0.0, 1.0};
  auto c = gaze_cost_matrix<double>(pred, truth, 2, 2);
  EXPECT_NEAR(c(0, 0), 0.9 + 0.2, 1e-15);
  EXPECT_NEAR(c(0, 1), 0.1 + 0.8, 1e-15);
  EXPECT_NEAR(c(1, 0), 0.1 + 0.8, 1e-15);
  EXPECT_NEAR(c(1, 1), 0.9 + 0.2, 1e-15);
}
