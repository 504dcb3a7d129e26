#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gemzsl/ops.hpp"
#include "gemzsl/rng.hpp"

namespace gemzsl {

/// Geometry of the image encoder (strided conv + relu stages) and the
/// attribute word encoder (one hidden relu layer).
struct EncoderConfig {
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::size_t input_channels = 3;
  std::vector<std::size_t> stage_channels{16, 32, 64};
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t padding = 1;
  std::size_t feature_channels = 64;
  std::size_t word_dim = 50;
  std::size_t word_hidden = 64;

  static std::size_t stage_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                  std::size_t pad) {
    const std::size_t padded = in + 2 * pad;
    if (stride == 0 || padded < kernel || (padded - kernel) % stride != 0) return 0;
    return (padded - kernel) / stride + 1;
  }

  /// Spatial extent after all stages; 0 if some stage is non-integral.
  std::pair<std::size_t, std::size_t> feature_extent() const {
    std::size_t h = input_height, w = input_width;
    for (std::size_t s = 0; s < stage_channels.size(); ++s) {
      h = stage_extent(h, kernel, stride, padding);
      w = stage_extent(w, kernel, stride, padding);
      if (h == 0 || w == 0) return {0, 0};
    }
    return {h, w};
  }
  std::size_t feature_height() const { return feature_extent().first; }
  std::size_t feature_width() const { return feature_extent().second; }

  void validate() const {
    if (stage_channels.empty()) throw ConfigError("encoder.stage_channels must not be empty");
    if (input_channels == 0 || word_dim == 0 || word_hidden == 0 || kernel == 0 || stride == 0)
      throw ConfigError("encoder sizes must be positive");
    if (feature_channels != stage_channels.back()) {
      throw ConfigError("encoder.feature_channels (" + std::to_string(feature_channels) +
                        ") must equal the last stage width (" +
                        std::to_string(stage_channels.back()) + ")");
    }
    const auto [h, w] = feature_extent();
    if (h == 0 || w == 0) {
      throw ConfigError("encoder stages do not divide the " + std::to_string(input_height) + "x" +
                        std::to_string(input_width) + " input into integral extents");
    }
    if (h * w < 2) throw ConfigError("encoder feature map must have at least 2 cells");
  }

  bool operator==(const EncoderConfig&) const = default;
};

/// Glorot-uniform initialization: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> values(shape_size(shape));
  for (auto& v : values) v = static_cast<T>(rng.uniform(-a, a));
  return Tensor<T>(std::move(shape), std::move(values), true);
}

template <typename T>
struct ImageEncoderParams {
  std::vector<Tensor<T>> kernels;  // stage s: kernel x kernel x in x out
  std::vector<Tensor<T>> biases;   // stage s: [out]

  static ImageEncoderParams init(const EncoderConfig& cfg, Rng& rng) {
    ImageEncoderParams p;
    std::size_t in = cfg.input_channels;
    for (auto out : cfg.stage_channels) {
      const std::size_t area = cfg.kernel * cfg.kernel;
      p.kernels.push_back(
          glorot_uniform<T>({cfg.kernel, cfg.kernel, in, out}, area * in, area * out, rng));
      p.biases.push_back(Tensor<T>::zeros({out}, true));
      in = out;
    }
    return p;
  }
};

template <typename T>
struct WordEncoderParams {
  Tensor<T> hidden_weight;  // De x hidden
  Tensor<T> hidden_bias;    // hidden
  Tensor<T> out_weight;     // hidden x C
  Tensor<T> out_bias;       // C

  static WordEncoderParams init(const EncoderConfig& cfg, Rng& rng) {
    WordEncoderParams p;
    p.hidden_weight =
        glorot_uniform<T>({cfg.word_dim, cfg.word_hidden}, cfg.word_dim, cfg.word_hidden, rng);
    p.hidden_bias = Tensor<T>::zeros({cfg.word_hidden}, true);
    p.out_weight = glorot_uniform<T>({cfg.word_hidden, cfg.feature_channels}, cfg.word_hidden,
                                     cfg.feature_channels, rng);
    p.out_bias = Tensor<T>::zeros({cfg.feature_channels}, true);
    return p;
  }
};

/// Feature map f(x): H x W x C.
template <typename T>
Tensor<T> encode_image(const Tensor<T>& image, const ImageEncoderParams<T>& params,
                       const EncoderConfig& cfg) {
  const Shape expected{cfg.input_height, cfg.input_width, cfg.input_channels};
  if (image.shape() != expected) {
    throw DimensionError("encode_image: expected input " + shape_string(expected) + ", got " +
                         shape_string(image.shape()));
  }
  Tensor<T> x = image;
  for (std::size_t s = 0; s < params.kernels.size(); ++s) {
    x = relu(bias_add(conv2d(x, params.kernels[s], cfg.stride, cfg.padding), params.biases[s]));
  }
  return x;
}

/// Global feature h(x): spatial mean of the feature map.
template <typename T>
Tensor<T> pool_global(const Tensor<T>& feature_map) {
  return global_avg_pool(feature_map);
}

/// Visual attribute queries E(e): K x C, the MLP applied to each word vector row.
template <typename T>
Tensor<T> encode_words(const Tensor<T>& word_vectors, const WordEncoderParams<T>& params) {
  detail::require_rank("encode_words", word_vectors, 2);
  if (word_vectors.dim(1) != params.hidden_weight.dim(0)) {
    throw DimensionError("encode_words: word vectors " + shape_string(word_vectors.shape()) +
                         " do not match hidden weight " +
                         shape_string(params.hidden_weight.shape()));
  }
  auto hidden = relu(bias_add(matmul(word_vectors, params.hidden_weight), params.hidden_bias));
  return bias_add(matmul(hidden, params.out_weight), params.out_bias);
}

}  // namespace gemzsl
