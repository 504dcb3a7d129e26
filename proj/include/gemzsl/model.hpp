#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gemzsl/classifier.hpp"
#include "gemzsl/encoders.hpp"
#include "gemzsl/gem.hpp"

namespace gemzsl {

/// Every trainable tensor of the model plus SGD momentum buffers.
template <typename T>
struct ModelParams {
  EncoderConfig encoder;
  std::size_t num_attributes = 0;
  std::size_t gaze_channels = 0;

  ImageEncoderParams<T> image;
  WordEncoderParams<T> words;
  Tensor<T> projection;         // V: C x K
  Tensor<T> transition_weight;  // 1 x 1 x K x D
  Tensor<T> transition_bias;    // D
  Tensor<T> sigma;              // [1]; requires_grad only when learnable

  /// Velocity per entry of named_parameters(), same order.
  std::vector<std::vector<T>> velocity;

  static ModelParams init(const EncoderConfig& cfg, std::size_t num_attributes,
                          std::size_t gaze_channels, double sigma, bool learnable_sigma,
                          std::uint64_t seed) {
    cfg.validate();
    if (num_attributes == 0) throw ConfigError("model needs at least one attribute");
    if (gaze_channels == 0) throw ConfigError("model needs at least one gaze channel");
    if (!(sigma > 0.0)) throw ConfigError("train.sigma must be positive");
    Rng rng(seed);
    ModelParams p;
    p.encoder = cfg;
    p.num_attributes = num_attributes;
    p.gaze_channels = gaze_channels;
    p.image = ImageEncoderParams<T>::init(cfg, rng);
    p.words = WordEncoderParams<T>::init(cfg, rng);
    p.projection = glorot_uniform<T>({cfg.feature_channels, num_attributes}, cfg.feature_channels,
                                     num_attributes, rng);
    p.transition_weight =
        glorot_uniform<T>({1, 1, num_attributes, gaze_channels}, num_attributes, gaze_channels, rng);
    p.transition_bias = Tensor<T>::zeros({gaze_channels}, true);
    p.sigma = Tensor<T>::scalar(static_cast<T>(sigma), learnable_sigma);
    p.reset_velocity();
    return p;
  }

  void reset_velocity() {
    velocity.clear();
    for (auto& [name, t] : named_parameters()) velocity.emplace_back(t.size(), T(0));
  }

  /// Stable, checkpoint-facing names and order of all parameter tensors.
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (std::size_t s = 0; s < image.kernels.size(); ++s) {
      out.emplace_back("image_encoder.stage" + std::to_string(s) + ".kernel", image.kernels[s]);
      out.emplace_back("image_encoder.stage" + std::to_string(s) + ".bias", image.biases[s]);
    }
    out.emplace_back("word_encoder.hidden_weight", words.hidden_weight);
    out.emplace_back("word_encoder.hidden_bias", words.hidden_bias);
    out.emplace_back("word_encoder.out_weight", words.out_weight);
    out.emplace_back("word_encoder.out_bias", words.out_bias);
    out.emplace_back("projection", projection);
    out.emplace_back("transition.weight", transition_weight);
    out.emplace_back("transition.bias", transition_bias);
    out.emplace_back("sigma", sigma);
    return out;
  }

  /// Tensors the optimizer updates (sigma only when learnable).
  std::vector<Tensor<T>> trainable() const {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_parameters())
      if (t.requires_grad()) out.push_back(t);
    return out;
  }

  /// Deep copy with fresh tensor nodes.
  ModelParams clone() const {
    ModelParams c = *this;
    auto copy = [](const Tensor<T>& t) {
      return Tensor<T>(t.shape(), std::vector<T>(t.values().begin(), t.values().end()),
                       t.requires_grad());
    };
    for (auto& k : c.image.kernels) k = copy(k);
    for (auto& b : c.image.biases) b = copy(b);
    c.words = {copy(words.hidden_weight), copy(words.hidden_bias), copy(words.out_weight),
               copy(words.out_bias)};
    c.projection = copy(projection);
    c.transition_weight = copy(transition_weight);
    c.transition_bias = copy(transition_bias);
    c.sigma = copy(sigma);
    return c;
  }
};

/// Per-image intermediate results of the full model.
template <typename T>
struct Forward {
  Tensor<T> features;          // f(x): H x W x C
  Tensor<T> global;            // h(x): C
  Tensor<T> attention;         // A(x): H x W x K
  Tensor<T> attribute_scores;  // a(x): K
  Tensor<T> gaze;              // g(x): H x W x D
};

/// Runs the encoder and the attention branch on one image. `queries` is
/// E(e), computed once per batch with encode_words().
template <typename T>
Forward<T> forward(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& queries,
                   bool with_attention = true) {
  Forward<T> out;
  out.features = encode_image(image, params.image, params.encoder);
  out.global = pool_global(out.features);
  if (with_attention) {
    out.attention = attention(queries, out.features);
    out.attribute_scores = localize_attributes(out.attention);
    out.gaze = attention_transition(out.attention, params.transition_weight, params.transition_bias);
  }
  return out;
}

}  // namespace gemzsl
