#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gemzsl/data.hpp"
#include "gemzsl/model.hpp"

namespace gemzsl {

enum class Precision { kF64, kF32 };

struct TrainConfig {
  double lambda1 = 0.2;  // distance loss
  double lambda2 = 1.0;  // attribute localization loss
  double lambda3 = 0.1;  // gaze loss; forced to 0 without gaze supervision
  double sigma = 20.0;
  bool learnable_sigma = false;
  double gamma = 0.7;  // evaluation-time calibration
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  double grad_clip = 0.0;  // global gradient-norm cap; 0 disables
  std::size_t classes_per_episode = 16;  // M
  std::size_t images_per_class = 2;      // N
  std::size_t batches_per_epoch = 50;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
  bool use_gaze = false;
  Precision precision = Precision::kF64;
  Similarity similarity = Similarity::kCosine;
  bool distance_per_attribute = false;

  double effective_lambda3() const { return use_gaze ? lambda3 : 0.0; }

  /// Copy with lambda3 zeroed when gaze supervision is off.
  TrainConfig resolved() const {
    TrainConfig c = *this;
    c.lambda3 = effective_lambda3();
    return c;
  }

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw ConfigError("train.lambda* must be >= 0");
    if (!(sigma > 0.0)) throw ConfigError("train.sigma must be positive");
    if (gamma < 0.0) throw ConfigError("train.gamma must be >= 0");
    if (classes_per_episode < 2) throw ConfigError("train.classes_per_episode must be >= 2");
    if (images_per_class < 1) throw ConfigError("train.images_per_class must be >= 1");
    if (batches_per_epoch < 1) throw ConfigError("train.batches_per_epoch must be >= 1");
    if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be >= 0");
    if (!std::isfinite(lr) || !std::isfinite(momentum) || !std::isfinite(weight_decay))
      throw ConfigError("train.lr, train.momentum and train.weight_decay must be finite");
  }
};

/// Weighted sum of the four loss terms.
inline double combine_losses(double cls, double dis, double mse, double gaze, double lambda1,
                             double lambda2, double lambda3) {
  return cls + lambda1 * dis + lambda2 * mse + lambda3 * gaze;
}

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  double cls = 0.0;
  double dis = 0.0;
  double mse = 0.0;
  double gaze = 0.0;
};

/// Constant per-dataset inputs of a training step.
template <typename T>
struct TrainContext {
  const ZslDataset* dataset = nullptr;
  Tensor<T> word_vectors;  // K x De
  Tensor<T> seen_table;    // K x S
  std::vector<Tensor<T>> class_attributes;  // phi(y) per class

  TrainContext(const ZslDataset& ds, Similarity similarity)
      : dataset(&ds),
        word_vectors(ds.word_tensor<T>()),
        seen_table(seen_class_table<T>(ds.classes, similarity)) {
    const std::size_t k = ds.classes.num_attributes;
    for (std::size_t c = 0; c < ds.classes.num_classes; ++c) {
      const auto r = ds.classes.row(c);
      class_attributes.emplace_back(Shape{k}, std::vector<T>(r.begin(), r.end()));
    }
  }
};

/// L = L_cls + l1 L_dis + l2 L_mse + l3 L_gaze, each averaged over the batch.
template <typename T>
LossBreakdown<T> total_loss(const Episode& batch, const ModelParams<T>& params,
                            const TrainConfig& cfg, const TrainContext<T>& ctx) {
  const ZslDataset& ds = *ctx.dataset;
  if (batch.indices.empty()) throw UsageError("total_loss: empty batch");
  const double lambda3 = cfg.effective_lambda3();
  const bool gaze_on = cfg.use_gaze;
  if (gaze_on && !ds.has_gaze())
    throw UsageError("total_loss: gaze loss requested but the dataset has no gaze ground truth");
  if (gaze_on && ds.gaze_channels != params.gaze_channels)
    throw DimensionError("total_loss: dataset has " + std::to_string(ds.gaze_channels) +
                         " gaze channels, model expects " + std::to_string(params.gaze_channels));

  const auto queries = encode_words(ctx.word_vectors, params.words);
  std::vector<Tensor<T>> cls_terms, dis_terms, mse_terms, gaze_terms;
  for (std::size_t b = 0; b < batch.indices.size(); ++b) {
    const std::size_t idx = batch.indices[b];
    const auto fw = forward(params, ds.image_tensor<T>(idx), queries, true);
    const auto logits = class_logits(fw.global, params.projection, ctx.seen_table, cfg.similarity,
                                     params.sigma, ZeroVectorMode::kLenient);
    cls_terms.push_back(cls_loss(logits, batch.labels[b], ds.classes.seen));
    dis_terms.push_back(distance_loss(fw.attention, cfg.distance_per_attribute));
    mse_terms.push_back(mse_loss(fw.attribute_scores, ctx.class_attributes[batch.labels[b]]));
    if (gaze_on) gaze_terms.push_back(gaze_loss(fw.gaze, ds.gaze_target<T>(idx)));
  }
  const T inv = T(1) / static_cast<T>(batch.indices.size());
  LossBreakdown<T> out;
  const auto cls = scale(add_n(cls_terms), inv);
  const auto dis = scale(add_n(dis_terms), inv);
  const auto mse = scale(add_n(mse_terms), inv);
  out.cls = static_cast<double>(cls.item());
  out.dis = static_cast<double>(dis.item());
  out.mse = static_cast<double>(mse.item());
  std::vector<Tensor<T>> terms{cls};
  if (cfg.lambda1 > 0) terms.push_back(scale(dis, static_cast<T>(cfg.lambda1)));
  if (cfg.lambda2 > 0) terms.push_back(scale(mse, static_cast<T>(cfg.lambda2)));
  if (gaze_on) {
    const auto gaze = scale(add_n(gaze_terms), inv);
    out.gaze = static_cast<double>(gaze.item());
    if (lambda3 > 0) terms.push_back(scale(gaze, static_cast<T>(lambda3)));
  }
  out.total = terms.size() == 1 ? terms[0] : add_n(terms);
  return out;
}

/// One SGD-with-momentum update of every trainable tensor:
///   v <- momentum * v + g + weight_decay * w;  w <- w - lr * v
template <typename T>
void sgd_step(ModelParams<T>& params, const TrainConfig& cfg) {
  auto named = params.named_parameters();
  if (params.velocity.size() != named.size()) params.reset_velocity();
  double norm2 = 0.0;
  for (auto& [name, t] : named) {
    if (!t.requires_grad() || !t.has_grad()) continue;
    for (auto v : t.grad()) {
      if (!std::isfinite(v)) throw NumericalError("non-finite gradient in parameter " + name);
      norm2 += static_cast<double>(v) * static_cast<double>(v);
    }
  }
  const double norm = std::sqrt(norm2);
  const T clip = static_cast<T>(cfg.grad_clip > 0.0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0);
  const T lr = static_cast<T>(cfg.lr), mu = static_cast<T>(cfg.momentum),
          wd = static_cast<T>(cfg.weight_decay);
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, t] = named[i];
    if (!t.requires_grad() || !t.has_grad()) continue;
    const auto g = t.grad();
    auto w = t.mutable_values();
    auto& vel = params.velocity[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      vel[j] = mu * vel[j] + clip * g[j] + wd * w[j];
      w[j] -= lr * vel[j];
      if (!std::isfinite(w[j])) throw NumericalError("non-finite value in parameter " + name);
    }
  }
}

struct EpochLog {
  std::size_t epoch = 0;
  double total = 0.0;
  double cls = 0.0;
  double dis = 0.0;
  double mse = 0.0;
  double gaze = 0.0;
  double sigma = 0.0;
  std::optional<double> validation_t1;
};

template <typename T>
struct TrainResult {
  ModelParams<T> params;
  std::vector<EpochLog> log;
};

template <typename T>
using Validator = std::function<double(const ModelParams<T>&)>;

/// Initial parameters for a dataset under the given configs.
template <typename T>
ModelParams<T> initial_params(const ZslDataset& ds, const EncoderConfig& enc,
                              const TrainConfig& cfg) {
  EncoderConfig e = enc;
  e.input_height = ds.image_height;
  e.input_width = ds.image_width;
  e.input_channels = ds.image_channels;
  e.word_dim = ds.word_dim;
  const std::size_t d = ds.has_gaze() ? ds.gaze_channels : 3;
  return ModelParams<T>::init(e, ds.classes.num_attributes, d, cfg.sigma, cfg.learnable_sigma,
                              splitmix64(cfg.seed ^ 0x5EEDULL));
}

/// Episode-based training. Each epoch runs batches_per_epoch M-way N-shot
/// episodes; classes and images are drawn without replacement within an
/// episode and with replacement across episodes.
template <typename T>
TrainResult<T> train(const ZslDataset& ds, const EncoderConfig& enc, const TrainConfig& cfg,
                     const Validator<T>& validator = {},
                     const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (cfg.use_gaze && !ds.has_gaze())
    throw UsageError("gaze training requested but the dataset has no gaze ground truth "
                     "(lambda3 = 0 when gaze ground truth is not available)");
  {
    // Configuration error before any work if episodes cannot be formed.
    Rng probe(0);
    (void)sample_episode(ds, cfg.classes_per_episode, cfg.images_per_class, probe);
  }
  TrainResult<T> result{initial_params<T>(ds, enc, cfg), {}};
  if (cfg.use_gaze && (ds.gaze_height != result.params.encoder.feature_height() ||
                       ds.gaze_width != result.params.encoder.feature_width())) {
    throw DimensionError("gaze grid " + std::to_string(ds.gaze_height) + "x" +
                         std::to_string(ds.gaze_width) + " does not match the feature map " +
                         std::to_string(result.params.encoder.feature_height()) + "x" +
                         std::to_string(result.params.encoder.feature_width()));
  }
  TrainContext<T> ctx(ds, cfg.similarity);
  Rng rng(splitmix64(cfg.seed ^ 0xE915ULL));
  auto trainable = result.params.trainable();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
      const auto batch = sample_episode(ds, cfg.classes_per_episode, cfg.images_per_class, rng);
      for (auto& t : trainable) t.zero_grad();
      const auto loss = total_loss(batch, result.params, cfg, ctx);
      backward(loss.total);
      sgd_step(result.params, cfg);
      log.total += static_cast<double>(loss.total.item());
      log.cls += loss.cls;
      log.dis += loss.dis;
      log.mse += loss.mse;
      log.gaze += loss.gaze;
    }
    const double inv = 1.0 / static_cast<double>(cfg.batches_per_epoch);
    log.total *= inv;
    log.cls *= inv;
    log.dis *= inv;
    log.mse *= inv;
    log.gaze *= inv;
    log.sigma = static_cast<double>(result.params.sigma.item());
    if (validator) log.validation_t1 = validator(result.params);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

}  // namespace gemzsl
