#pragma once

#include <string>
#include <vector>

#include "gemzsl/gradcheck.hpp"
#include "gemzsl/train.hpp"

namespace gemzsl {

struct GradSuiteRow {
  std::string name;
  GradCheckReport report;
  bool passed = false;
};

struct GradSuiteOptions {
  double tolerance = 1e-5;
  /// Passed through to the checker; corrupts one analytic coordinate per loss.
  double inject_fault = 0.0;
  std::uint64_t seed = 7;
};

/// Finite-difference check of each loss term, end to end through both
/// encoders, in double precision on a small model with a 4x4 feature map.
/// Every trainable tensor is checked.
inline std::vector<GradSuiteRow> run_grad_suite(const GradSuiteOptions& options = {}) {
  GenConfig g;
  g.num_seen = 4;
  g.num_unseen = 2;
  g.num_attributes = 5;
  g.images_per_class = 4;
  g.image_size = 16;
  g.blob_radius = 3;
  g.word_dim = 6;
  g.seed = options.seed;
  const auto ds = generate_synthetic(g);

  EncoderConfig enc;
  enc.stage_channels = {4, 6};
  enc.feature_channels = 6;
  enc.word_hidden = 8;
  TrainConfig cfg;
  cfg.seed = options.seed;
  const auto params = initial_params<double>(ds, enc, cfg);
  TrainContext<double> ctx(ds, cfg.similarity);
  Rng rng(options.seed);
  const auto batch = sample_episode(ds, 2, 1, rng);

  // Mean of one loss term over the batch.
  auto term = [&](auto per_image) {
    return [&, per_image] {
      const auto queries = encode_words(ctx.word_vectors, params.words);
      std::vector<Tensor<double>> parts;
      for (std::size_t b = 0; b < batch.indices.size(); ++b) {
        const auto fw = forward(params, ds.image_tensor<double>(batch.indices[b]), queries, true);
        parts.push_back(per_image(fw, b));
      }
      return scale(add_n(parts), 1.0 / static_cast<double>(parts.size()));
    };
  };
  using Fw = Forward<double>;
  const std::vector<std::pair<std::string, std::function<Tensor<double>()>>> losses{
      {"cls", term([&](const Fw& fw, std::size_t b) {
         return cls_loss(class_logits(fw.global, params.projection, ctx.seen_table, cfg.similarity,
                                      params.sigma),
                         batch.labels[b], ds.classes.seen);
       })},
      {"distance", term([&](const Fw& fw, std::size_t) { return distance_loss(fw.attention); })},
      {"mse", term([&](const Fw& fw, std::size_t b) {
         return mse_loss(fw.attribute_scores, ctx.class_attributes[batch.labels[b]]);
       })},
      {"gaze", term([&](const Fw& fw, std::size_t b) {
         return gaze_loss(fw.gaze, ds.gaze_target<double>(batch.indices[b]));
       })},
  };

  // Fourth-order stencil at 1e-3. The gaze loss has coordinates with
  // gradients near 1e-8, which smaller steps bury in roundoff; coordinates
  // whose stencil crosses a relu kink or a selection are excluded.
  GradCheckOptions gc;
  gc.order = 4;
  gc.step = 1e-3;
  gc.inject_fault = options.inject_fault;
  std::vector<GradSuiteRow> rows;
  for (const auto& [name, fn] : losses) {
    GradSuiteRow row;
    row.name = name;
    row.report = finite_diff_check(fn, params.trainable(), gc);
    row.passed = row.report.checked > 0 && row.report.max_rel_error <= options.tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gemzsl
