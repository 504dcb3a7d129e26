#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gemzsl/data.hpp"
#include "gemzsl/model.hpp"

namespace gemzsl {

/// Mean over classes in `class_set` of per-class top-1 accuracy. Classes
/// without samples are left out of the mean.
inline double per_class_top1(std::span<const std::size_t> predictions,
                             std::span<const std::size_t> labels,
                             std::span<const std::size_t> class_set) {
  if (predictions.size() != labels.size())
    throw UsageError("per_class_top1: predictions and labels differ in length");
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> tally;  // class -> (correct, count)
  const std::set<std::size_t> wanted(class_set.begin(), class_set.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!wanted.count(labels[i])) continue;
    auto& [correct, count] = tally[labels[i]];
    ++count;
    correct += predictions[i] == labels[i];
  }
  if (tally.empty()) throw UsageError("per_class_top1: no class in the set has samples");
  double acc = 0.0;
  for (const auto& [c, t] : tally)
    acc += static_cast<double>(t.first) / static_cast<double>(t.second);
  return acc / static_cast<double>(tally.size());
}

/// H = 2 S U / (S + U), with H = 0 when S + U = 0.
inline double harmonic_mean(double s, double u) {
  if (s + u <= 0.0) return 0.0;
  return 2.0 * s * u / (s + u);
}

namespace detail {

inline std::vector<std::size_t> fixated_cells(const std::vector<GridCell>& fixations,
                                              std::size_t height, std::size_t width) {
  std::set<std::size_t> cells;
  for (const auto& f : fixations) {
    if (f.row >= height || f.col >= width) throw UsageError("fixation outside the saliency map");
    cells.insert(f.row * width + f.col);
  }
  return {cells.begin(), cells.end()};
}

}  // namespace detail

/// Mann-Whitney U statistic of fixated (positive) against all other cells:
/// the number of (positive, negative) pairs ranked correctly plus one half
/// per tied pair. Computed from mid-ranks.
struct AucStatistic {
  double u = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double auc() const { return u / (static_cast<double>(positives) * static_cast<double>(negatives)); }
};

inline AucStatistic auc_statistic(std::span<const double> saliency, std::size_t height,
                                  std::size_t width, const std::vector<GridCell>& fixations) {
  if (saliency.size() != height * width) throw DimensionError("auc: saliency size mismatch");
  if (fixations.empty()) throw UsageError("auc: at least one fixation is required");
  const auto pos = detail::fixated_cells(fixations, height, width);
  const std::size_t n = saliency.size();
  if (pos.size() == n) throw UsageError("auc: every cell is fixated, no negatives remain");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return saliency[a] < saliency[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && saliency[order[j + 1]] == saliency[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based mid-rank
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  for (auto p : pos) rank_sum += rank[p];
  const double p = static_cast<double>(pos.size());
  return {rank_sum - p * (p + 1.0) / 2.0, pos.size(), n - pos.size()};
}

/// Pixel-level ROC area with fixated cells as positives ("AUC-pixel").
inline double auc(std::span<const double> saliency, std::size_t height, std::size_t width,
                  const std::vector<GridCell>& fixations) {
  return auc_statistic(saliency, height, width, fixations).auc();
}

/// Normalized scanpath saliency: mean of the z-scored map (population
/// standard deviation) at the fixations. A constant map scores 0.
inline double nss(std::span<const double> saliency, std::size_t height, std::size_t width,
                  const std::vector<GridCell>& fixations) {
  if (saliency.size() != height * width) throw DimensionError("nss: saliency size mismatch");
  if (fixations.empty()) throw UsageError("nss: at least one fixation is required");
  // Checked directly: the rounded mean of a constant map need not equal its value.
  const auto [lo, hi] = std::minmax_element(saliency.begin(), saliency.end());
  if (*lo == *hi) return 0.0;
  const double n = static_cast<double>(saliency.size());
  const double mu = std::accumulate(saliency.begin(), saliency.end(), 0.0) / n;
  double var = 0.0;
  for (double v : saliency) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / n);
  double acc = 0.0;
  for (const auto& f : fixations) {
    if (f.row >= height || f.col >= width) throw UsageError("fixation outside the saliency map");
    acc += (saliency[f.row * width + f.col] - mu) / sd;
  }
  return acc / static_cast<double>(fixations.size());
}

enum class EvalMode { kZsl, kGzsl };

inline const char* mode_name(EvalMode m) { return m == EvalMode::kZsl ? "zsl" : "gzsl"; }

struct ChannelGaze {
  double auc = 0.0;
  double nss = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  EvalMode mode = EvalMode::kZsl;
  std::optional<double> t1;  // zsl
  std::optional<double> seen_accuracy;    // S (gzsl)
  std::optional<double> unseen_accuracy;  // U (gzsl)
  std::optional<double> harmonic;         // H (gzsl)
  std::optional<double> auc;
  std::optional<double> nss;
  std::vector<ChannelGaze> gaze_per_channel;  // indexed by ground-truth channel
  double gamma = 0.0;
  double sigma = 0.0;
  std::size_t seen_samples = 0;
  std::size_t unseen_samples = 0;
  std::size_t predicted_seen = 0;
};

/// Global features h(x) (and gaze maps, when requested) of the listed images.
struct Embeddings {
  std::vector<std::size_t> indices;
  std::vector<std::vector<double>> global;
  std::vector<std::vector<double>> gaze;  // H x W x D per image, empty if not computed
};

template <typename T>
Embeddings compute_embeddings(const ZslDataset& ds, const ModelParams<T>& params,
                              const std::vector<std::size_t>& indices, bool with_gaze) {
  NoGradGuard no_grad;
  Embeddings out;
  out.indices = indices;
  const auto queries = encode_words(ds.word_tensor<T>(), params.words);
  for (auto idx : indices) {
    const auto fw = forward(params, ds.image_tensor<T>(idx), queries, with_gaze);
    out.global.emplace_back(fw.global.values().begin(), fw.global.values().end());
    if (with_gaze) out.gaze.emplace_back(fw.gaze.values().begin(), fw.gaze.values().end());
  }
  return out;
}

template <typename T>
std::vector<double> projection_values(const ModelParams<T>& params) {
  return {params.projection.values().begin(), params.projection.values().end()};
}

/// Averages AUC/NSS of predicted gaze maps against the dataset fixations.
/// Predicted channels are paired with ground-truth channels by the same
/// L1 Hungarian matching the gaze loss uses.
inline void add_gaze_metrics(const ZslDataset& ds, const Embeddings& emb, MetricsReport& report) {
  if (!ds.has_gaze() || emb.gaze.empty()) return;
  const std::size_t gh = ds.gaze_height, gw = ds.gaze_width, d = ds.gaze_channels, hw = gh * gw;
  report.gaze_per_channel.assign(d, {});
  double auc_sum = 0.0, nss_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < emb.indices.size(); ++n) {
    const std::size_t idx = emb.indices[n];
    const auto& pred = emb.gaze[n];
    if (pred.size() != hw * d)
      throw DimensionError("gaze maps of the model do not match the dataset gaze grid");
    const auto truth = ds.gaze_target<double>(idx);
    const auto match = hungarian(gaze_cost_matrix<double>(pred, truth.values(), hw, d));
    for (std::size_t p = 0; p < d; ++p) {
      const std::size_t q = match.perm[p];
      const auto& fix = ds.fixations[idx][q];
      if (fix.empty()) continue;
      std::vector<double> map(hw);
      for (std::size_t cell = 0; cell < hw; ++cell) map[cell] = pred[cell * d + p];
      const double a = auc(map, gh, gw, fix), s = nss(map, gh, gw, fix);
      auto& ch = report.gaze_per_channel[q];
      ch.auc += a;
      ch.nss += s;
      ++ch.count;
      auc_sum += a;
      nss_sum += s;
      ++count;
    }
  }
  for (auto& ch : report.gaze_per_channel) {
    if (ch.count == 0) continue;
    ch.auc /= static_cast<double>(ch.count);
    ch.nss /= static_cast<double>(ch.count);
  }
  if (count > 0) {
    report.auc = auc_sum / static_cast<double>(count);
    report.nss = nss_sum / static_cast<double>(count);
  }
}

/// Scores precomputed embeddings. ZSL: unseen test images over unseen classes.
/// GZSL: all test images over all classes with calibrated stacking.
inline MetricsReport evaluate_embeddings(const ZslDataset& ds, std::span<const double> projection,
                                         const Embeddings& emb, EvalMode mode, double sigma,
                                         double gamma) {
  MetricsReport report;
  report.mode = mode;
  report.sigma = sigma;
  report.gamma = mode == EvalMode::kGzsl ? gamma : 0.0;
  std::vector<std::size_t> preds, labels;
  for (std::size_t n = 0; n < emb.indices.size(); ++n) {
    const std::size_t y = ds.labels[emb.indices[n]];
    const bool seen = ds.classes.is_seen(y);
    if (mode == EvalMode::kZsl && seen)
      throw UsageError("zsl evaluation received a seen-class image");
    const std::size_t pred =
        mode == EvalMode::kZsl
            ? predict_zsl(emb.global[n], projection, ds.classes, ZeroVectorMode::kLenient)
            : predict_gzsl(emb.global[n], projection, ds.classes, sigma, gamma,
                           ZeroVectorMode::kLenient);
    preds.push_back(pred);
    labels.push_back(y);
    (seen ? report.seen_samples : report.unseen_samples) += 1;
    report.predicted_seen += ds.classes.is_seen(pred);
  }
  if (mode == EvalMode::kZsl) {
    report.t1 = per_class_top1(preds, labels, ds.classes.unseen);
  } else {
    report.seen_accuracy = per_class_top1(preds, labels, ds.classes.seen);
    report.unseen_accuracy = per_class_top1(preds, labels, ds.classes.unseen);
    report.harmonic = harmonic_mean(*report.seen_accuracy, *report.unseen_accuracy);
  }
  return report;
}

/// Full evaluation of a model on the dataset test split. Gaze metrics are
/// averaged over unseen test images when the dataset carries fixations.
template <typename T>
MetricsReport evaluate(const ZslDataset& ds, const ModelParams<T>& params, EvalMode mode,
                       double gamma, bool with_gaze = true) {
  if (ds.classes.num_attributes != params.num_attributes)
    throw DimensionError("evaluate: dataset has " + std::to_string(ds.classes.num_attributes) +
                         " attributes, model expects " + std::to_string(params.num_attributes));
  const auto indices = mode == EvalMode::kZsl ? ds.test_indices_of(false) : ds.test_indices;
  const bool gaze = with_gaze && ds.has_gaze() && ds.gaze_channels == params.gaze_channels;
  const auto emb = compute_embeddings(ds, params, indices, false);
  const auto proj = projection_values(params);
  auto report = evaluate_embeddings(ds, proj, emb, mode, static_cast<double>(params.sigma.item()),
                                    gamma);
  if (gaze) add_gaze_metrics(ds, compute_embeddings(ds, params, ds.test_indices_of(false), true),
                             report);
  return report;
}

}  // namespace gemzsl
