#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gemzsl/ops.hpp"

namespace gemzsl {

/// Class attribute matrix Phi (classes x K, row-major) with its seen/unseen partition.
struct ClassEmbeddings {
  std::size_t num_classes = 0;
  std::size_t num_attributes = 0;
  std::vector<double> phi;
  std::vector<std::size_t> seen;
  std::vector<std::size_t> unseen;

  std::span<const double> row(std::size_t c) const {
    return std::span<const double>(phi).subspan(c * num_attributes, num_attributes);
  }

  bool is_seen(std::size_t c) const {
    return std::find(seen.begin(), seen.end(), c) != seen.end();
  }

  std::vector<std::size_t> all_classes() const {
    std::vector<std::size_t> ids(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) ids[c] = c;
    return ids;
  }

  void validate() const {
    if (phi.size() != num_classes * num_attributes)
      throw DimensionError("class embeddings: Phi has " + std::to_string(phi.size()) +
                           " entries for " + std::to_string(num_classes) + "x" +
                           std::to_string(num_attributes));
    for (std::size_t c = 0; c < num_classes; ++c) {
      bool nonzero = false;
      for (double v : row(c)) {
        if (!std::isfinite(v)) throw UsageError("class embeddings: non-finite attribute value");
        nonzero = nonzero || v != 0.0;
      }
      if (!nonzero) throw UsageError("class embeddings: class " + std::to_string(c) + " is all-zero");
    }
    std::vector<int> side(num_classes, 0);
    for (auto c : seen) {
      if (c >= num_classes) throw UsageError("class embeddings: seen id out of range");
      ++side[c];
    }
    for (auto c : unseen) {
      if (c >= num_classes) throw UsageError("class embeddings: unseen id out of range");
      ++side[c];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (side[c] != 1)
        throw UsageError("class embeddings: class " + std::to_string(c) +
                         " is not in exactly one of seen/unseen");
    }
  }
};

// ---------------------------------------------------------------------------
// Inference on plain values

/// Semantic projection h^T V (V is C x K, row-major). h is first divided by
/// its largest magnitude; cosine results are unaffected, and exact positive
/// rescalings of h then give bit-identical projections.
inline std::vector<double> project(std::span<const double> h, std::span<const double> v,
                                   std::size_t k) {
  const std::size_t c = h.size();
  if (v.size() != c * k) {
    throw DimensionError("project: V holds " + std::to_string(v.size()) + " values, expected " +
                         std::to_string(c) + "x" + std::to_string(k));
  }
  double largest = 0.0;
  for (double x : h) largest = std::max(largest, std::abs(x));
  std::vector<double> out(k, 0.0);
  if (largest == 0.0) return out;
  for (std::size_t i = 0; i < c; ++i) {
    const double hi = h[i] / largest;
    for (std::size_t j = 0; j < k; ++j) out[j] += hi * v[i * k + j];
  }
  return out;
}

inline double l2_norm(std::span<const double> x) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  return std::sqrt(ss);
}

/// cos(u, w); zero vectors throw in strict mode and give 0 in lenient mode.
inline double cosine(std::span<const double> u, std::span<const double> w, ZeroVectorMode mode) {
  const double nu = l2_norm(u), nw = l2_norm(w);
  if (nu == 0.0 || nw == 0.0) {
    if (mode == ZeroVectorMode::kStrict)
      throw NumericalError("cosine similarity with a zero vector");
    return 0.0;
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * w[i];
  return std::clamp(dot / (nu * nw), -1.0, 1.0);
}

/// sigma * cos(h^T V, phi(y)) for each y in `class_ids`.
inline std::vector<double> cosine_scores(std::span<const double> h, std::span<const double> v,
                                         const ClassEmbeddings& classes,
                                         std::span<const std::size_t> class_ids, double sigma,
                                         ZeroVectorMode mode = ZeroVectorMode::kStrict) {
  if (!(sigma > 0.0)) throw UsageError("cosine_scores: sigma must be positive");
  const auto proj = project(h, v, classes.num_attributes);
  std::vector<double> scores;
  scores.reserve(class_ids.size());
  for (auto c : class_ids) scores.push_back(sigma * cosine(proj, classes.row(c), mode));
  return scores;
}

/// ZSL decision: the unseen class with the highest cosine; ties go to the lowest class id.
inline std::size_t predict_zsl(std::span<const double> h, std::span<const double> v,
                               const ClassEmbeddings& classes,
                               ZeroVectorMode mode = ZeroVectorMode::kStrict) {
  if (classes.unseen.empty()) throw UsageError("predict_zsl: no unseen classes");
  auto ids = classes.unseen;
  std::sort(ids.begin(), ids.end());
  const auto scores = cosine_scores(h, v, classes, ids, 1.0, mode);
  std::size_t best = 0;
  for (std::size_t i = 1; i < ids.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return ids[best];
}

/// GZSL decision with calibrated stacking: argmax over all classes of
/// sigma * cos - gamma * [seen]; ties go to the lowest class id.
inline std::size_t predict_gzsl(std::span<const double> h, std::span<const double> v,
                                const ClassEmbeddings& classes, double sigma, double gamma,
                                ZeroVectorMode mode = ZeroVectorMode::kStrict) {
  if (gamma < 0.0) throw UsageError("predict_gzsl: gamma must be non-negative");
  const auto ids = classes.all_classes();
  const auto scores = cosine_scores(h, v, classes, ids, sigma, mode);
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < ids.size(); ++c) {
    const double s = scores[c] - (classes.is_seen(c) ? gamma : 0.0);
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Training-time scoring on the autodiff graph

enum class Similarity { kCosine, kDot };

/// Seen-class score table: K x S, the (optionally L2-normalized) class
/// attribute rows transposed so that logits = proj * table.
template <typename T>
Tensor<T> seen_class_table(const ClassEmbeddings& classes, Similarity similarity) {
  const std::size_t k = classes.num_attributes, s = classes.seen.size();
  std::vector<T> table(k * s);
  for (std::size_t col = 0; col < s; ++col) {
    const auto r = classes.row(classes.seen[col]);
    const double norm = similarity == Similarity::kCosine ? l2_norm(r) : 1.0;
    if (norm == 0.0) throw NumericalError("seen class with all-zero attributes");
    for (std::size_t a = 0; a < k; ++a) table[a * s + col] = static_cast<T>(r[a] / norm);
  }
  return Tensor<T>({k, s}, std::move(table));
}

/// Seen-class logits for one global feature h ([C]): sigma * cos(h^T V, phi)
/// in cosine mode, plain h^T V phi in dot mode.
template <typename T>
Tensor<T> class_logits(const Tensor<T>& h, const Tensor<T>& v, const Tensor<T>& table,
                       Similarity similarity, const Tensor<T>& sigma,
                       ZeroVectorMode mode = ZeroVectorMode::kLenient) {
  auto proj = matmul(reshape(h, {1, h.size()}), v);
  if (similarity == Similarity::kDot) return reshape(matmul(proj, table), {table.dim(1)});
  auto cos = matmul(normalize_rows(proj, mode), table);
  return scale_by(reshape(cos, {table.dim(1)}), sigma);
}

/// Cross-entropy of the softmax over seen-class logits for true class `label`.
template <typename T>
Tensor<T> cls_loss(const Tensor<T>& logits, std::size_t label,
                   std::span<const std::size_t> seen_ids) {
  const auto it = std::find(seen_ids.begin(), seen_ids.end(), label);
  if (it == seen_ids.end()) {
    throw UsageError("cls_loss: class " + std::to_string(label) + " is not a seen class");
  }
  return cross_entropy(logits, static_cast<std::size_t>(it - seen_ids.begin()));
}

}  // namespace gemzsl
