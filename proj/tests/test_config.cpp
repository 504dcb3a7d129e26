#include <gtest/gtest.h>

#include "gemzsl/config.hpp"

using namespace gemzsl;

TEST(RunConfigTest, UnknownKeyIsRejected) {
  RunConfig c;
  EXPECT_THROW(c.set("train.lamda1", "0.3"), ConfigError);
  EXPECT_THROW(c.get("nope"), ConfigError);
  EXPECT_THROW(RunConfig::from_text("train.bogus = 1\n"), ConfigError);
}

TEST(RunConfigTest, MalformedValues) {
  RunConfig c;
  EXPECT_THROW(c.set("train.lr", "fast"), ConfigError);
  EXPECT_THROW(c.set("train.lr", "1e-3x"), ConfigError);
  EXPECT_THROW(c.set("train.lr", "inf"), ConfigError);
  EXPECT_THROW(c.set("train.epochs", "-1"), ConfigError);
  EXPECT_THROW(c.set("train.use_gaze", "maybe"), ConfigError);
  EXPECT_THROW(c.set("train.precision", "f16"), ConfigError);
  EXPECT_THROW(c.set("train.similarity", "euclid"), ConfigError);
  EXPECT_THROW(RunConfig::from_text("train.lr 0.1\n"), ConfigError);
}

TEST(RunConfigTest, SigmaAcceptsLearnable) {
  RunConfig c;
  c.set("train.sigma", "learnable");
  EXPECT_TRUE(c.train.learnable_sigma);
  EXPECT_EQ(c.train.sigma, 20.0);
  c.set("train.sigma", "learnable:12.5");
  EXPECT_TRUE(c.train.learnable_sigma);
  EXPECT_EQ(c.train.sigma, 12.5);
  EXPECT_EQ(c.get("train.sigma"), "learnable:12.5");
  c.set("train.sigma", "30");
  EXPECT_FALSE(c.train.learnable_sigma);
  EXPECT_EQ(c.train.sigma, 30.0);
  EXPECT_THROW(c.set("train.sigma", "learnable=3"), ConfigError);
}

TEST(RunConfigTest, TextRoundTrip) {
  RunConfig c;
  c.set("gen.seed", "99");
  c.set("train.lr", "0.0123456789");
  c.set("train.similarity", "dot");
  c.set("train.precision", "f32");
  c.set("train.use_gaze", "true");
  c.set("encoder.stage_channels", "8,16,32");
  const auto back = RunConfig::from_text(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.train.lr, 0.0123456789);
  EXPECT_EQ(back.encoder.feature_channels, 32u);
  EXPECT_EQ(back.train.similarity, Similarity::kDot);
}

TEST(RunConfigTest, CommentsAndBlankLines) {
  const auto c = RunConfig::from_text("# header\n\n  train.epochs = 3  # trailing\ngen.noise=0.1\n");
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.gen.noise, 0.1);
}

TEST(RunConfigTest, ResolvedTextZeroesGazeWeightWithoutGaze) {
  RunConfig c;
  c.train.lambda3 = 0.1;
  c.train.use_gaze = false;
  EXPECT_NE(c.to_text().find("train.lambda3 = 0\n"), std::string::npos);
  EXPECT_NE(c.to_text(false).find("train.lambda3 = 0.1\n"), std::string::npos);
  c.train.use_gaze = true;
  EXPECT_NE(c.to_text().find("train.lambda3 = 0.1\n"), std::string::npos);
}

TEST(RunConfigTest, HashIsStableAndSensitive) {
  RunConfig a, b;
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 8u);
  b.train.seed = 43;
  EXPECT_NE(a.hash(), b.hash());
  // Inactive gaze weight does not change the resolved configuration.
  RunConfig c;
  c.train.lambda3 = 0.5;
  EXPECT_EQ(a.hash(), c.hash());
}

TEST(RunConfigTest, EveryFieldRoundTripsThroughGetAndSet) {
  RunConfig c = synthetic_preset();
  for (const auto& f : RunConfig::fields()) {
    RunConfig d;
    d.set(f.key, c.get(f.key));
    EXPECT_EQ(d.get(f.key), c.get(f.key)) << f.key;
  }
}

TEST(RunConfigTest, PresetIsValid) {
  const auto c = synthetic_preset();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.gen.num_seen, 20u);
  EXPECT_EQ(c.gen.num_unseen, 5u);
  EXPECT_EQ(c.gen.num_attributes, 12u);
  EXPECT_EQ(c.gen.images_per_class, 40u);
  EXPECT_EQ(c.encoder.feature_height(), 4u);
  EXPECT_EQ(c.encoder.feature_channels, 64u);
}

TEST(RunConfigTest, MissingFile) {
  EXPECT_THROW(RunConfig::from_file("/nonexistent/gemzsl.conf"), ConfigError);
}
