#include <gtest/gtest.h>

#include <algorithm>

#include "gemzsl/encoders.hpp"
#include "gemzsl/gradcheck.hpp"
#include "support.hpp"

using namespace gemzsl;
using gemzsl::testing::random_tensor;
using gemzsl::testing::to_vector;

using TD = Tensor<double>;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.input_height = c.input_width = 8;
  c.stage_channels = {4, 5};
  c.feature_channels = 5;
  c.word_dim = 6;
  c.word_hidden = 7;
  return c;
}

}  // namespace

TEST(EncoderConfigTest, DefaultMapIsFourByFourBySixtyFour) {
  EncoderConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.feature_height(), 4u);
  EXPECT_EQ(c.feature_width(), 4u);
  EXPECT_EQ(c.feature_channels, 64u);
}

TEST(EncoderConfigTest, RejectsInconsistentSettings) {
  EncoderConfig c;
  c.feature_channels = 32;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.kernel = 3;  // 32 + 2 - 3 is odd: stride 2 does not divide
  EXPECT_THROW(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.stage_channels = {8, 8, 8, 8, 64};  // 1x1 map
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EncodeImageTest, DefaultShape) {
  EncoderConfig cfg;
  Rng rng(1);
  auto params = ImageEncoderParams<double>::init(cfg, rng);
  auto f = encode_image(random_tensor({32, 32, 3}, rng), params, cfg);
  EXPECT_EQ(f.shape(), (Shape{4, 4, 64}));
}

TEST(EncodeImageTest, ZeroWeightsGiveZeroMap) {
  EncoderConfig cfg;
  Rng rng(2);
  auto params = ImageEncoderParams<double>::init(cfg, rng);
  for (auto& k : params.kernels) std::fill(k.mutable_values().begin(), k.mutable_values().end(), 0.0);
  auto f = encode_image(random_tensor({32, 32, 3}, rng), params, cfg);
  for (double v : f.values()) EXPECT_EQ(v, 0.0);
}

TEST(EncodeImageTest, Deterministic) {
  EncoderConfig cfg;
  Rng rng(3);
  auto params = ImageEncoderParams<double>::init(cfg, rng);
  auto x = random_tensor({32, 32, 3}, rng);
  EXPECT_EQ(to_vector(encode_image(x, params, cfg)), to_vector(encode_image(x, params, cfg)));
}

TEST(EncodeImageTest, WrongInputSizeIsRejected) {
  EncoderConfig cfg;
  Rng rng(4);
  auto params = ImageEncoderParams<double>::init(cfg, rng);
  EXPECT_THROW(encode_image(TD::zeros({16, 16, 3}), params, cfg), DimensionError);
}

TEST(EncodeImageTest, TranslationCovariantUnderWholeStrideShift) {
  // Single 2x2 stride-2 stage without padding: shifting the input by one
  // stride shifts the output by one cell.
  EncoderConfig cfg;
  cfg.input_height = cfg.input_width = 8;
  cfg.stage_channels = {3};
  cfg.feature_channels = 3;
  cfg.kernel = 2;
  cfg.stride = 2;
  cfg.padding = 0;
  Rng rng(5);
  auto params = ImageEncoderParams<double>::init(cfg, rng);
  std::vector<double> base(8 * 8 * 3, 0.0), moved(8 * 8 * 3, 0.0);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = rng.uniform(-1, 1);
        base[(i * 8 + j) * 3 + c] = v;
        moved[((i + 2) * 8 + j + 2) * 3 + c] = v;
      }
  auto f0 = encode_image(TD({8, 8, 3}, base), params, cfg);
  auto f1 = encode_image(TD({8, 8, 3}, moved), params, cfg);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        EXPECT_EQ(f1[((i + 1) * 4 + j + 1) * 3 + c], f0[(i * 4 + j) * 3 + c]);
}

TEST(PoolGlobalTest, InheritedCases) {
  EXPECT_EQ(to_vector(pool_global(TD::full({2, 2, 3}, 0.5))), (std::vector<double>{0.5, 0.5, 0.5}));
  EXPECT_EQ(to_vector(pool_global(TD({2, 2, 1}, {1, 2, 3, 4}))), (std::vector<double>{2.5}));
  EXPECT_EQ(to_vector(pool_global(TD({1, 1, 2}, {7, 8}))), (std::vector<double>{7, 8}));
}

TEST(EncodeWordsTest, Shape) {
  EncoderConfig cfg;
  Rng rng(6);
  auto params = WordEncoderParams<double>::init(cfg, rng);
  EXPECT_EQ(encode_words(random_tensor({5, 50}, rng), params).shape(), (Shape{5, 64}));
}

TEST(EncodeWordsTest, ZeroWeightsGiveZeroOutput) {
  EncoderConfig cfg;
  Rng rng(7);
  auto params = WordEncoderParams<double>::init(cfg, rng);
  for (auto* t : {&params.hidden_weight, &params.out_weight})
    std::fill(t->mutable_values().begin(), t->mutable_values().end(), 0.0);
  const auto out = encode_words(random_tensor({5, 50}, rng), params);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(EncodeWordsTest, RowPermutationCommutes) {
  EncoderConfig cfg = small_config();
  Rng rng(8);
  auto params = WordEncoderParams<double>::init(cfg, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + rng.below(5);
    auto e = random_tensor({k, cfg.word_dim}, rng);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    std::vector<double> permuted(e.size());
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t j = 0; j < cfg.word_dim; ++j)
        permuted[r * cfg.word_dim + j] = e[perm[r] * cfg.word_dim + j];
    auto out = encode_words(e, params);
    auto out_p = encode_words(TD({k, cfg.word_dim}, permuted), params);
    const std::size_t c = cfg.feature_channels;
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t j = 0; j < c; ++j) EXPECT_EQ(out_p[r * c + j], out[perm[r] * c + j]);
  }
}

TEST(EncodeWordsTest, DimensionMismatch) {
  EncoderConfig cfg;
  Rng rng(9);
  auto params = WordEncoderParams<double>::init(cfg, rng);
  EXPECT_THROW(encode_words(TD::zeros({5, 40}), params), DimensionError);
}

TEST(EncoderGradTest, BothEncodersPassFiniteDifferences) {
  EncoderConfig cfg = small_config();
  Rng rng(10);
  auto image = ImageEncoderParams<double>::init(cfg, rng);
  auto words = WordEncoderParams<double>::init(cfg, rng);
  auto x = random_tensor({8, 8, 3}, rng);
  auto e = random_tensor({3, cfg.word_dim}, rng);
  std::vector<TD> params = image.kernels;
  params.insert(params.end(), image.biases.begin(), image.biases.end());
  for (auto* t : {&words.hidden_weight, &words.hidden_bias, &words.out_weight, &words.out_bias})
    params.push_back(*t);
  auto loss = [&] {
    auto f = encode_image(x, image, cfg);
    auto q = encode_words(e, words);
    return sum(mul(matmul(q, transpose(reshape(f, {4, cfg.feature_channels}))),
                   TD::full({3, 4}, 0.3)));
  };
  auto report = finite_diff_check(loss, params);
  EXPECT_GT(report.checked, 0u);
  EXPECT_LE(report.max_rel_error, 1e-5);
}

TEST(InitTest, GlorotBoundsAndZeroBiases) {
  EncoderConfig cfg;
  Rng rng(11);
  auto p = ImageEncoderParams<double>::init(cfg, rng);
  const double a = std::sqrt(6.0 / (16.0 * 3 + 16.0 * 16));
  for (double v : p.kernels[0].values()) EXPECT_LE(std::abs(v), a);
  for (const auto& b : p.biases)
    for (double v : b.values()) EXPECT_EQ(v, 0.0);
}
