#pragma once

#include <cmath>
#include <vector>

#include "gemzsl/matching.hpp"
#include "gemzsl/ops.hpp"

namespace gemzsl {

/// Attribute attention A(x): H x W x K. Each query row of E(e) is scored
/// against every spatial cell of the key f(x) and softmaxed over the cells.
/// No temperature or 1/sqrt(C) scaling is applied.
template <typename T>
Tensor<T> attention(const Tensor<T>& query, const Tensor<T>& key) {
  detail::require_rank("attention", query, 2);
  detail::require_rank("attention", key, 3);
  const std::size_t H = key.dim(0), W = key.dim(1), C = key.dim(2), K = query.dim(0);
  if (query.dim(1) != C) {
    throw DimensionError("attention: query " + shape_string(query.shape()) + " and key " +
                         shape_string(key.shape()) + " disagree on channels");
  }
  auto key_t = transpose(reshape(key, {H * W, C}));    // C x HW
  auto rows = softmax_rows(matmul(query, key_t));      // K x HW
  return reshape(transpose(rows), {H, W, K});
}

/// Per-channel spread of attention around its peak:
///   sum_k sum_ij A[i,j,k] * ((i - i~)^2 + (j - j~)^2)
/// with (i~, j~) the first row-major argmax of channel k. The peak location is
/// a constant for differentiation. `per_attribute_mean` divides by K.
template <typename T>
Tensor<T> distance_loss(const Tensor<T>& maps, bool per_attribute_mean = false) {
  detail::require_rank("distance_loss", maps, 3);
  const std::size_t H = maps.dim(0), W = maps.dim(1), K = maps.dim(2);
  std::vector<T> coeff(maps.size());
  std::uint64_t h = detail::kFnvOffset;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t peak = spatial_argmax<T>(maps.values(), H * W, K, k);
    h = detail::fnv1a(h, peak);
    const auto pi = static_cast<T>(peak / W), pj = static_cast<T>(peak % W);
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const T di = static_cast<T>(i) - pi, dj = static_cast<T>(j) - pj;
        coeff[(i * W + j) * K + k] = di * di + dj * dj;
      }
    }
  }
  SelectionLog::record(h);
  auto total = sum(mul(maps, Tensor<T>(maps.shape(), std::move(coeff))));
  return per_attribute_mean ? scale(total, T(1) / static_cast<T>(K)) : total;
}

/// Attribute response a(x): spatial max of each attention channel.
template <typename T>
Tensor<T> localize_attributes(const Tensor<T>& maps) {
  return global_max_pool(maps);
}

/// Squared Euclidean distance ||a - phi||^2, summed over attributes.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& scores, const Tensor<T>& attributes) {
  if (scores.size() != attributes.size()) {
    throw DimensionError("mse_loss: " + std::to_string(scores.size()) + " predicted vs " +
                         std::to_string(attributes.size()) + " ground-truth attributes");
  }
  auto target = attributes.shape() == scores.shape() ? attributes
                                                     : reshape(attributes, scores.shape());
  auto diff = sub(scores, target);
  return sum(mul(diff, diff));
}

/// Gaze maps g(x) = sigmoid(conv1x1(A) + b): H x W x D.
template <typename T>
Tensor<T> attention_transition(const Tensor<T>& maps, const Tensor<T>& weight,
                               const Tensor<T>& bias) {
  detail::require_rank("attention_transition", weight, 4);
  if (weight.dim(0) != 1 || weight.dim(1) != 1) {
    throw DimensionError("attention_transition: expected a 1x1 kernel, got " +
                         shape_string(weight.shape()));
  }
  return sigmoid(bias_add(conv2d(maps, weight, 1, 0), bias));
}

/// D x D matrix of L1 distances between predicted channel p and ground-truth channel q.
template <typename T>
CostMatrix gaze_cost_matrix(std::span<const T> pred, std::span<const T> truth, std::size_t hw,
                            std::size_t d) {
  std::vector<double> cost(d * d, 0.0);
  for (std::size_t p = 0; p < d; ++p) {
    for (std::size_t q = 0; q < d; ++q) {
      double acc = 0.0;
      for (std::size_t cell = 0; cell < hw; ++cell)
        acc += std::abs(static_cast<double>(pred[cell * d + p]) -
                        static_cast<double>(truth[cell * d + q]));
      cost[p * d + q] = acc;
    }
  }
  return CostMatrix(d, std::move(cost));
}

/// Gaze loss: Hungarian-match predicted to ground-truth channels by L1
/// distance, then pixel-averaged binary cross-entropy over matched pairs.
/// The matching is a fixed selection for differentiation.
template <typename T>
Tensor<T> gaze_loss(const Tensor<T>& gaze, const Tensor<T>& truth) {
  detail::require_rank("gaze_loss", gaze, 3);
  detail::require_same_shape("gaze_loss", gaze, truth);
  const std::size_t hw = gaze.dim(0) * gaze.dim(1), d = gaze.dim(2);
  const auto match = hungarian(gaze_cost_matrix<T>(gaze.values(), truth.values(), hw, d));
  std::uint64_t h = detail::kFnvOffset;
  for (auto q : match.perm) h = detail::fnv1a(h, q);
  SelectionLog::record(h);
  std::vector<T> reordered(truth.size());
  for (std::size_t cell = 0; cell < hw; ++cell)
    for (std::size_t p = 0; p < d; ++p) reordered[cell * d + p] = truth[cell * d + match.perm[p]];
  return binary_cross_entropy(gaze, Tensor<T>(truth.shape(), std::move(reordered)));
}

}  // namespace gemzsl
