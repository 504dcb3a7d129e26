#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gemzsl/tensor.hpp"

namespace gemzsl {

struct GradCheckOptions {
  double step = 1e-6;
  /// 2: (f(x+h) - f(x-h)) / 2h.  4: the fourth-order central stencil over
  /// +/-h and +/-2h, which tolerates a larger step and so loses less to
  /// roundoff on coordinates whose gradient is tiny.
  int order = 2;
  /// Harness self-test: perturbs the first analytic gradient coordinate by
  /// this relative amount before comparison. Zero disables it.
  double inject_fault = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates skipped because a +/- step flipped a discrete selection
  /// (max-pool argmax, relu mask, gaze matching).
  std::size_t excluded = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences,
/// coordinate by coordinate over every tensor in `params`. `loss_fn` must
/// rebuild the graph from the current parameter values on each call.
///
/// relative error = |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)
inline GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss_fn,
                                         std::vector<Tensor<double>> params,
                                         const GradCheckOptions& options = {}) {
  for (auto& p : params) p.zero_grad();
  std::vector<std::uint64_t> base_choices;
  {
    SelectionLog log;
    backward(loss_fn());
    base_choices = log.entries();
  }
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());
  if (options.inject_fault != 0.0 && !analytic.empty() && !analytic[0].empty()) {
    analytic[0][0] = analytic[0][0] * (1.0 + options.inject_fault) + options.inject_fault;
  }

  auto evaluate = [&](bool& same_choices) {
    NoGradGuard no_grad;
    SelectionLog log;
    const double v = loss_fn().item();
    same_choices = log.entries() == base_choices;
    return v;
  };

  if (options.order != 2 && options.order != 4)
    throw UsageError("finite_diff_check: order must be 2 or 4");
  GradCheckReport report;
  const double h = options.step;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      bool same = true;
      auto at = [&](double offset) {
        bool s = false;
        values[i] = original + offset;
        const double v = evaluate(s);
        same = same && s;
        return v;
      };
      double fd = 0.0;
      if (options.order == 4) {
        const double d1 = at(h) - at(-h), d2 = at(2 * h) - at(-2 * h);
        fd = (8.0 * d1 - d2) / (12.0 * h);
      } else {
        fd = (at(h) - at(-h)) / (2.0 * h);
      }
      values[i] = original;
      if (!same) {
        ++report.excluded;
        continue;
      }
      const double ad = analytic[pi][i];
      const double err = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = pi;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace gemzsl
