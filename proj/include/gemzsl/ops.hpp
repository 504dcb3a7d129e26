#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gemzsl/tensor.hpp"

namespace gemzsl {

/// Lower clamp applied to log() and binary cross-entropy inputs.
inline constexpr double kLogClamp = 1e-12;

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFF;
    h *= 0x100000001B3ULL;
  }
  return h;
}
inline constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_string(a.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra and reshaping

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions of " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " disagree");
  }
  std::vector<T> out(m * n, T(0));
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = av[i * k + p];
      const T* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return detail::make_result<T>(
      "matmul", {m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](detail::Node<T>& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        const auto& g = self.grad;
        if (A.requires_grad) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              T acc = 0;
              for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B.value[p * n + j];
              A.grad[i * k + p] += acc;
            }
          }
        }
        if (B.requires_grad) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const T s = A.value[i * k + p];
              for (std::size_t j = 0; j < n; ++j) B.grad[p * n + j] += s * g[i * n + j];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> out(r * c);
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return detail::make_result<T>("transpose", {c, r}, std::move(out), {a.node()},
                                [r, c](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  for (std::size_t i = 0; i < r; ++i)
                                    for (std::size_t j = 0; j < c; ++j)
                                      A.grad[i * c + j] += self.grad[j * r + i];
                                });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                         shape_string(shape));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  return detail::make_result<T>("reshape", std::move(shape), std::move(out), {a.node()},
                                [](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  for (std::size_t i = 0; i < A.grad.size(); ++i)
                                    A.grad[i] += self.grad[i];
                                });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result<T>("add", a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& self) {
                                  for (auto& in : self.inputs) {
                                    if (!in->requires_grad) continue;
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      in->grad[i] += self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result<T>("sub", a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  auto& B = *self.inputs[1];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    if (A.requires_grad) A.grad[i] += self.grad[i];
                                    if (B.requires_grad) B.grad[i] -= self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result<T>("mul", a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  auto& B = *self.inputs[1];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    if (A.requires_grad) A.grad[i] += self.grad[i] * B.value[i];
                                    if (B.requires_grad) B.grad[i] += self.grad[i] * A.value[i];
                                  }
                                });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return detail::make_result<T>("scale", a.shape(), std::move(out), {a.node()},
                                [factor](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    A.grad[i] += self.grad[i] * factor;
                                });
}

/// Multiplies every element by the single value of `factor` (shape [1]).
template <typename T>
Tensor<T> scale_by(const Tensor<T>& a, const Tensor<T>& factor) {
  if (factor.size() != 1) {
    throw DimensionError("scale_by: factor must hold one value, got " +
                         shape_string(factor.shape()));
  }
  const T s = factor[0];
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return detail::make_result<T>("scale_by", a.shape(), std::move(out), {a.node(), factor.node()},
                                [](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  auto& S = *self.inputs[1];
                                  if (A.requires_grad) {
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      A.grad[i] += self.grad[i] * S.value[0];
                                  }
                                  if (S.requires_grad) {
                                    T acc = 0;
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      acc += self.grad[i] * A.value[i];
                                    S.grad[0] += acc;
                                  }
                                });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  std::uint64_t mask_hash = detail::kFnvOffset;
  const bool log_mask = SelectionLog::recording();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool on = a[i] > T(0);
    out[i] = on ? a[i] : T(0);
    if (log_mask) mask_hash = detail::fnv1a(mask_hash, on);
  }
  if (log_mask) SelectionLog::record(mask_hash);
  return detail::make_result<T>("relu", a.shape(), std::move(out), {a.node()},
                                [](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    if (A.value[i] > T(0)) A.grad[i] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = a[i];
    // Split by sign so exp() never overflows.
    if (x >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T(1) + e);
    }
  }
  return detail::make_result<T>("sigmoid", a.shape(), std::move(out), {a.node()},
                                [](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    const T y = self.value[i];
                                    A.grad[i] += self.grad[i] * y * (T(1) - y);
                                  }
                                });
}

/// Natural log with inputs clamped below at kLogClamp; clamped entries get no gradient.
template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  const T eps = static_cast<T>(kLogClamp);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(a[i], eps));
  return detail::make_result<T>("log", a.shape(), std::move(out), {a.node()},
                                [eps](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    if (A.value[i] > eps) A.grad[i] += self.grad[i] / A.value[i];
                                });
}

/// Adds `bias` (shape [n]) along the last axis of `a`.
template <typename T>
Tensor<T> bias_add(const Tensor<T>& a, const Tensor<T>& bias) {
  const std::size_t n = bias.size();
  if (bias.rank() != 1 || a.shape().back() != n) {
    throw DimensionError("bias_add: bias " + shape_string(bias.shape()) +
                         " does not match last axis of " + shape_string(a.shape()));
  }
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + bias[i % n];
  return detail::make_result<T>("bias_add", a.shape(), std::move(out), {a.node(), bias.node()},
                                [n](detail::Node<T>& self) {
                                  auto& A = *self.inputs[0];
                                  auto& B = *self.inputs[1];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    if (A.requires_grad) A.grad[i] += self.grad[i];
                                    if (B.requires_grad) B.grad[i % n] += self.grad[i];
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (auto v : a.values()) acc += v;
  return detail::make_result<T>("sum", {1}, {acc}, {a.node()}, [](detail::Node<T>& self) {
    auto& A = *self.inputs[0];
    for (auto& g : A.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

/// Elementwise sum of equally shaped tensors.
template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& terms) {
  if (terms.empty()) throw UsageError("add_n: no terms");
  std::vector<T> out(terms[0].size(), T(0));
  std::vector<std::shared_ptr<detail::Node<T>>> inputs;
  for (const auto& t : terms) {
    detail::require_same_shape("add_n", terms[0], t);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t[i];
    inputs.push_back(t.node());
  }
  return detail::make_result<T>("add_n", terms[0].shape(), std::move(out), std::move(inputs),
                                [](detail::Node<T>& self) {
                                  for (auto& in : self.inputs) {
                                    if (!in->requires_grad) continue;
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      in->grad[i] += self.grad[i];
                                  }
                                });
}

/// Mean over spatial axes of an H x W x C map.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& f) {
  detail::require_rank("global_avg_pool", f, 3);
  const std::size_t hw = f.dim(0) * f.dim(1), c = f.dim(2);
  std::vector<T> out(c, T(0));
  const auto fv = f.values();
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] += fv[p * c + ch];
  const T inv = T(1) / static_cast<T>(hw);
  for (auto& v : out) v *= inv;
  return detail::make_result<T>("global_avg_pool", {c}, std::move(out), {f.node()},
                                [hw, c, inv](detail::Node<T>& self) {
                                  auto& F = *self.inputs[0];
                                  for (std::size_t p = 0; p < hw; ++p)
                                    for (std::size_t ch = 0; ch < c; ++ch)
                                      F.grad[p * c + ch] += self.grad[ch] * inv;
                                });
}

/// Row-major index of the first spatial maximum of channel `ch` in an H x W x C map.
template <typename T>
std::size_t spatial_argmax(std::span<const T> values, std::size_t hw, std::size_t c,
                           std::size_t ch) {
  std::size_t best = 0;
  for (std::size_t p = 1; p < hw; ++p)
    if (values[p * c + ch] > values[best * c + ch]) best = p;
  return best;
}

/// Max over spatial axes of an H x W x K map. Backward routes to the first
/// row-major argmax of each channel.
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& f) {
  detail::require_rank("global_max_pool", f, 3);
  const std::size_t hw = f.dim(0) * f.dim(1), c = f.dim(2);
  std::vector<T> out(c);
  std::vector<std::size_t> arg(c);
  std::uint64_t h = detail::kFnvOffset;
  for (std::size_t ch = 0; ch < c; ++ch) {
    arg[ch] = spatial_argmax<T>(f.values(), hw, c, ch);
    out[ch] = f[arg[ch] * c + ch];
    h = detail::fnv1a(h, arg[ch]);
  }
  SelectionLog::record(h);
  return detail::make_result<T>("global_max_pool", {c}, std::move(out), {f.node()},
                                [arg = std::move(arg), c](detail::Node<T>& self) {
                                  auto& F = *self.inputs[0];
                                  for (std::size_t ch = 0; ch < c; ++ch)
                                    F.grad[arg[ch] * c + ch] += self.grad[ch];
                                });
}

// ---------------------------------------------------------------------------
// Normalization and losses

/// Row-wise softmax, stabilized by subtracting each row's max.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& m) {
  detail::require_rank("softmax_rows", m, 2);
  const std::size_t r = m.dim(0), c = m.dim(1);
  std::vector<T> out(r * c);
  const auto mv = m.values();
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = mv.data() + i * c;
    T* o = out.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return detail::make_result<T>("softmax_rows", {r, c}, std::move(out), {m.node()},
                                [r, c](detail::Node<T>& self) {
                                  auto& M = *self.inputs[0];
                                  for (std::size_t i = 0; i < r; ++i) {
                                    const T* y = self.value.data() + i * c;
                                    const T* g = self.grad.data() + i * c;
                                    T dot = 0;
                                    for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
                                    for (std::size_t j = 0; j < c; ++j)
                                      M.grad[i * c + j] += y[j] * (g[j] - dot);
                                  }
                                });
}

enum class ZeroVectorMode { kStrict, kLenient };

/// Scales each row of a matrix to unit L2 norm. A zero row throws in strict
/// mode and maps to a zero row with zero gradient in lenient mode.
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& m, ZeroVectorMode mode = ZeroVectorMode::kStrict) {
  detail::require_rank("normalize_rows", m, 2);
  const std::size_t r = m.dim(0), c = m.dim(1);
  std::vector<T> out(r * c, T(0));
  std::vector<T> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    T ss = 0;
    for (std::size_t j = 0; j < c; ++j) ss += m[i * c + j] * m[i * c + j];
    norms[i] = std::sqrt(ss);
    if (norms[i] == T(0)) {
      if (mode == ZeroVectorMode::kStrict)
        throw NumericalError("normalize_rows: row " + std::to_string(i) + " has zero norm");
      continue;
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m[i * c + j] / norms[i];
  }
  return detail::make_result<T>(
      "normalize_rows", {r, c}, std::move(out), {m.node()},
      [r, c, norms = std::move(norms)](detail::Node<T>& self) {
        auto& M = *self.inputs[0];
        for (std::size_t i = 0; i < r; ++i) {
          if (norms[i] == T(0)) continue;
          const T* y = self.value.data() + i * c;
          const T* g = self.grad.data() + i * c;
          T dot = 0;
          for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
          for (std::size_t j = 0; j < c; ++j) M.grad[i * c + j] += (g[j] - y[j] * dot) / norms[i];
        }
      });
}

/// -log softmax(logits)[target] for a single logit vector.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t target) {
  const std::size_t n = logits.size();
  if (target >= n) {
    throw UsageError("cross_entropy: target " + std::to_string(target) + " outside " +
                     std::to_string(n) + " classes");
  }
  const auto lv = logits.values();
  const T mx = *std::max_element(lv.begin(), lv.end());
  T z = 0;
  for (auto v : lv) z += std::exp(v - mx);
  const T lse = mx + std::log(z);
  return detail::make_result<T>("cross_entropy", {1}, {lse - lv[target]}, {logits.node()},
                                [n, target, lse](detail::Node<T>& self) {
                                  auto& L = *self.inputs[0];
                                  const T g = self.grad[0];
                                  for (std::size_t j = 0; j < n; ++j) {
                                    const T p = std::exp(L.value[j] - lse);
                                    L.grad[j] += g * (p - (j == target ? T(1) : T(0)));
                                  }
                                });
}

/// Pixel-averaged binary cross-entropy; predictions are clamped to
/// [kLogClamp, 1 - kLogClamp] and clamped entries carry no gradient.
template <typename T>
Tensor<T> binary_cross_entropy(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape("binary_cross_entropy", pred, target);
  const T lo = static_cast<T>(kLogClamp);
  const T hi = T(1) - lo;
  const std::size_t n = pred.size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T p = std::clamp(pred[i], lo, hi);
    const T t = target[i];
    acc -= t * std::log(p) + (T(1) - t) * std::log(T(1) - p);
  }
  return detail::make_result<T>(
      "binary_cross_entropy", {1}, {acc / static_cast<T>(n)}, {pred.node(), target.node()},
      [n, lo, hi](detail::Node<T>& self) {
        auto& P = *self.inputs[0];
        auto& G = *self.inputs[1];
        const T scale = self.grad[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const T raw = P.value[i];
          const T p = std::clamp(raw, lo, hi);
          const T t = G.value[i];
          if (P.requires_grad && raw == p) P.grad[i] += scale * (p - t) / (p * (T(1) - p));
          if (G.requires_grad) G.grad[i] += scale * (std::log(T(1) - p) - std::log(p));
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution

/// Cross-correlation of an H x W x Cin map with a kh x kw x Cin x Cout kernel.
/// The output extent (H + 2 pad - kh) / stride + 1 must be integral.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& f, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t pad) {
  detail::require_rank("conv2d", f, 3);
  detail::require_rank("conv2d", kernel, 4);
  const std::size_t H = f.dim(0), W = f.dim(1), cin = f.dim(2);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != cin) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) +
                         " expects a different channel count than input " +
                         shape_string(f.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t ph = H + 2 * pad, pw = W + 2 * pad;
  if (ph < kh || pw < kw || (ph - kh) % stride != 0 || (pw - kw) % stride != 0) {
    throw DimensionError("conv2d: input " + shape_string(f.shape()) + " with kernel " +
                         shape_string(kernel.shape()) + ", stride " + std::to_string(stride) +
                         ", pad " + std::to_string(pad) + " gives a non-integral output size");
  }
  const std::size_t Ho = (ph - kh) / stride + 1, Wo = (pw - kw) / stride + 1;
  std::vector<T> out(Ho * Wo * cout, T(0));
  const auto fv = f.values();
  const auto kv = kernel.values();

  // Visits every (output cell, kernel tap) pair that lands inside the input.
  auto for_each_tap = [=](auto&& body) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            body((oy * Wo + ox) * cout, (static_cast<std::size_t>(iy) * W + ix) * cin,
                 (ky * kw + kx) * cin * cout);
          }
        }
      }
    }
  };

  for_each_tap([&](std::size_t o, std::size_t in, std::size_t k) {
    T* dst = out.data() + o;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T x = fv[in + ci];
      const T* w = kv.data() + k + ci * cout;
      for (std::size_t co = 0; co < cout; ++co) dst[co] += x * w[co];
    }
  });

  return detail::make_result<T>(
      "conv2d", {Ho, Wo, cout}, std::move(out), {f.node(), kernel.node()},
      [for_each_tap, cin, cout](detail::Node<T>& self) {
        auto& F = *self.inputs[0];
        auto& K = *self.inputs[1];
        const T* g = self.grad.data();
        for_each_tap([&](std::size_t o, std::size_t in, std::size_t k) {
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* w = K.value.data() + k + ci * cout;
            if (F.requires_grad) {
              T acc = 0;
              for (std::size_t co = 0; co < cout; ++co) acc += g[o + co] * w[co];
              F.grad[in + ci] += acc;
            }
            if (K.requires_grad) {
              const T x = F.value[in + ci];
              T* dw = K.grad.data() + k + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) dw[co] += x * g[o + co];
            }
          }
        });
      });
}

}  // namespace gemzsl
