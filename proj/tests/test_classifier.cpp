#include <gtest/gtest.h>

#include <cmath>

#include "gemzsl/classifier.hpp"
#include "gemzsl/gradcheck.hpp"
#include "support.hpp"

using namespace gemzsl;
using gemzsl::testing::random_tensor;

using TD = Tensor<double>;

namespace {

// Identity projection: with V = I, h^T V = h.
std::vector<double> identity(std::size_t k) {
  std::vector<double> v(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) v[i * k + i] = 1.0;
  return v;
}

ClassEmbeddings two_d_classes(std::vector<double> phi, std::vector<std::size_t> seen,
                              std::vector<std::size_t> unseen) {
  ClassEmbeddings c;
  c.num_attributes = 2;
  c.num_classes = phi.size() / 2;
  c.phi = std::move(phi);
  c.seen = std::move(seen);
  c.unseen = std::move(unseen);
  c.validate();
  return c;
}

ClassEmbeddings random_classes(std::size_t seen, std::size_t unseen, std::size_t k, Rng& rng) {
  ClassEmbeddings c;
  c.num_classes = seen + unseen;
  c.num_attributes = k;
  for (std::size_t i = 0; i < c.num_classes; ++i) {
    for (std::size_t a = 0; a < k; ++a) c.phi.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    c.phi[i * k + rng.below(k)] = 1.0;
    (i < seen ? c.seen : c.unseen).push_back(i);
  }
  c.validate();
  return c;
}

}  // namespace

TEST(ClassEmbeddingsTest, Validation) {
  EXPECT_THROW(two_d_classes({1, 0, 0, 0}, {0}, {1}), UsageError);       // zero row
  EXPECT_THROW(two_d_classes({1, 0, 0, 1}, {0, 1}, {1}), UsageError);    // overlap
  EXPECT_THROW(two_d_classes({1, 0, 0, 1}, {0}, {}), UsageError);        // not exhaustive
  EXPECT_NO_THROW(two_d_classes({1, 0, 0, 1}, {0}, {1}));
}

TEST(CosineScoresTest, EqualVectors) {
  auto cls = two_d_classes({3, 4, 0, 1}, {0}, {1});
  std::vector<double> h{1.0}, v{3, 4};
  EXPECT_NEAR(cosine_scores(h, v, cls, std::vector<std::size_t>{0}, 20.0)[0], 20.0, 1e-13);
}

TEST(CosineScoresTest, Orthogonal) {
  auto cls = two_d_classes({0, 1, 1, 1}, {0}, {1});
  std::vector<double> h{1, 0};
  EXPECT_EQ(cosine_scores(h, identity(2), cls, std::vector<std::size_t>{0}, 20.0)[0], 0.0);
}

TEST(CosineScoresTest, FortyFiveDegrees) {
  auto cls = two_d_classes({1, 0, 0, 1}, {0}, {1});
  std::vector<double> h{1, 1};
  EXPECT_NEAR(cosine_scores(h, identity(2), cls, std::vector<std::size_t>{0}, 20.0)[0], 14.14214, 1e-5);
}

TEST(CosineScoresTest, ZeroProjectionStrictAndLenient) {
  auto cls = two_d_classes({1, 0, 0, 1}, {0}, {1});
  std::vector<double> h{0, 0};
  const std::vector<std::size_t> ids{0, 1};
  EXPECT_THROW(cosine_scores(h, identity(2), cls, ids, 20.0, ZeroVectorMode::kStrict), NumericalError);
  auto s = cosine_scores(h, identity(2), cls, ids, 20.0, ZeroVectorMode::kLenient);
  EXPECT_EQ(s, (std::vector<double>{0.0, 0.0}));
}

TEST(CosineScoresTest, BoundedBySigma) {
  Rng rng(1);
  auto cls = random_classes(6, 3, 5, rng);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> h(7), v(7 * 5);
    for (auto& x : h) x = rng.uniform(-3, 3);
    for (auto& x : v) x = rng.uniform(-1, 1);
    for (double s : cosine_scores(h, v, cls, cls.all_classes(), 20.0)) {
      EXPECT_LE(s, 20.0);
      EXPECT_GE(s, -20.0);
    }
  }
}

TEST(CosineScoresTest, PositiveRescalingIsExactForExactlyScaledInputs) {
  Rng rng(2);
  auto cls = random_classes(6, 3, 5, rng);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> h(7), h_big(7), v(7 * 5);
    for (std::size_t i = 0; i < h.size(); ++i) {
      h[i] = static_cast<double>(rng.below(2001)) - 1000.0;
      h_big[i] = h[i] * 8.0;  // powers of two scale exactly
    }
    for (auto& x : v) x = rng.uniform(-1, 1);
    EXPECT_EQ(cosine_scores(h, v, cls, cls.all_classes(), 20.0, ZeroVectorMode::kLenient),
              cosine_scores(h_big, v, cls, cls.all_classes(), 20.0, ZeroVectorMode::kLenient));
  }
}

TEST(ClsLossTest, UniformScores) {
  const std::vector<std::size_t> seen{3, 5, 7, 9};
  EXPECT_NEAR(cls_loss(TD({4}, {2, 2, 2, 2}), 5, seen).item(), std::log(4.0), 1e-15);
}

TEST(ClsLossTest, ConfidentTwoClass) {
  const std::vector<std::size_t> seen{0, 1};
  EXPECT_NEAR(cls_loss(TD({2}, {20, 0}), 0, seen).item(), 2.061e-9, 1e-12);
}

TEST(ClsLossTest, PermutingClassesWithLabelIsInvariant) {
  const double a = cls_loss(TD({3}, {1.5, -0.2, 0.7}), 4, std::vector<std::size_t>{2, 4, 6}).item();
  const double b = cls_loss(TD({3}, {0.7, 1.5, -0.2}), 4, std::vector<std::size_t>{6, 2, 4}).item();
  EXPECT_DOUBLE_EQ(a, b);
}

TEST(ClsLossTest, UnseenLabelIsRejected) {
  EXPECT_THROW(cls_loss(TD({2}, {0, 0}), 7, std::vector<std::size_t>{0, 1}), UsageError);
}

TEST(ClsLossTest, GradientWrtProjectionAndFeature) {
  Rng rng(3);
  auto cls = random_classes(4, 2, 5, rng);
  auto table = seen_class_table<double>(cls, Similarity::kCosine);
  auto h = random_tensor({6}, rng, 0.1, 1.0, true);
  auto v = random_tensor({6, 5}, rng, -1, 1, true);
  auto sigma = TD::scalar(20.0);
  auto report = finite_diff_check(
      [&] { return cls_loss(class_logits(h, v, table, Similarity::kCosine, sigma), 2, cls.seen); },
      {h, v});
  EXPECT_LE(report.max_rel_error, 1e-5);
}

TEST(ClassLogitsTest, MatchesPlainCosineScores) {
  Rng rng(4);
  auto cls = random_classes(5, 2, 4, rng);
  auto h = random_tensor({3}, rng, 0, 1);
  auto v = random_tensor({3, 4}, rng);
  auto logits = class_logits(h, v, seen_class_table<double>(cls, Similarity::kCosine),
                             Similarity::kCosine, TD::scalar(20.0));
  const auto expected = cosine_scores(h.values(), v.values(), cls, cls.seen, 20.0);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(logits[i], expected[i], 1e-12);
}

TEST(ClassLogitsTest, DotModeIsUnscaledInnerProduct) {
  auto cls = two_d_classes({1, 2, 0, 1}, {0, 1}, {});
  cls.unseen.clear();
  auto logits = class_logits(TD({2}, {3, 5}), TD({2, 2}, identity(2)),
                             seen_class_table<double>(cls, Similarity::kDot), Similarity::kDot,
                             TD::scalar(20.0));
  EXPECT_EQ(logits[0], 13.0);
  EXPECT_EQ(logits[1], 5.0);
}

TEST(PredictZslTest, Cases) {
  auto cls = two_d_classes({1, 0, 0, 1, 1, 1, 2, 1}, {0}, {1, 2, 3});
  std::vector<double> h{1, 1};
  EXPECT_EQ(predict_zsl(h, identity(2), cls), 2u);
  auto single = two_d_classes({1, 0, 0, 1}, {0}, {1});
  EXPECT_EQ(predict_zsl(h, identity(2), single), 1u);
}

TEST(PredictZslTest, ArgmaxOfCosines) {
  // Unseen cosines 0.2, 0.9, 0.5 against h = e1.
  auto unit = [](double c) { return std::vector<double>{c, std::sqrt(1 - c * c)}; };
  std::vector<double> phi{1, 1};
  for (double c : {0.2, 0.9, 0.5}) {
    auto r = unit(c);
    phi.insert(phi.end(), r.begin(), r.end());
  }
  auto cls = two_d_classes(phi, {0}, {1, 2, 3});
  EXPECT_EQ(predict_zsl(std::vector<double>{1, 0}, identity(2), cls), 2u);
}

TEST(PredictZslTest, TiesGoToLowestId) {
  auto cls = two_d_classes({1, 1, 1, 0, 1, 0}, {0}, {2, 1});
  EXPECT_EQ(predict_zsl(std::vector<double>{1, 0}, identity(2), cls), 1u);
}

TEST(PredictZslTest, NoUnseenClasses) {
  ClassEmbeddings cls;
  cls.num_classes = 1;
  cls.num_attributes = 2;
  cls.phi = {1, 0};
  cls.seen = {0};
  EXPECT_THROW(predict_zsl(std::vector<double>{1, 0}, identity(2), cls), UsageError);
}

TEST(PredictGzslTest, CalibrationFlipsToUnseen) {
  // sigma = 10; seen class cosine 0.5 -> 5.0, unseen cosine 0.45 -> 4.5.
  auto unit = [](double c) { return std::vector<double>{c, std::sqrt(1 - c * c)}; };
  auto s = unit(0.5), u = unit(0.45);
  auto cls = two_d_classes({s[0], s[1], u[0], u[1]}, {0}, {1});
  std::vector<double> h{1, 0};
  EXPECT_EQ(predict_gzsl(h, identity(2), cls, 10.0, 0.0), 0u);
  EXPECT_EQ(predict_gzsl(h, identity(2), cls, 10.0, 0.7), 1u);
}

TEST(PredictGzslTest, ZeroGammaIsUnrestrictedArgmax) {
  Rng rng(5);
  auto cls = random_classes(6, 3, 5, rng);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> h(4), v(4 * 5);
    for (auto& x : h) x = rng.uniform(0, 1);
    for (auto& x : v) x = rng.uniform(-1, 1);
    const auto scores = cosine_scores(h, v, cls, cls.all_classes(), 20.0);
    const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    EXPECT_EQ(predict_gzsl(h, v, cls, 20.0, 0.0), best);
  }
}

TEST(PredictGzslTest, LargeGammaNeverPredictsSeen) {
  Rng rng(6);
  auto cls = random_classes(6, 3, 5, rng);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> h(4), v(4 * 5);
    for (auto& x : h) x = rng.uniform(0, 1);
    for (auto& x : v) x = rng.uniform(-1, 1);
    EXPECT_FALSE(cls.is_seen(predict_gzsl(h, v, cls, 20.0, 40.0)));
  }
}

TEST(PredictGzslTest, NegativeGammaIsRejected) {
  auto cls = two_d_classes({1, 0, 0, 1}, {0}, {1});
  EXPECT_THROW(predict_gzsl(std::vector<double>{1, 0}, identity(2), cls, 20.0, -0.1), UsageError);
}
