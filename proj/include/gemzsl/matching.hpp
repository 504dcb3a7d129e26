#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "gemzsl/error.hpp"

namespace gemzsl {

/// Square matrix of pairing costs; entry (p, q) is the cost of assigning
/// row p (a predicted channel) to column q (a ground-truth channel).
class CostMatrix {
 public:
  CostMatrix(std::size_t n, std::vector<double> values) : n_(n), values_(std::move(values)) {
    if (n_ == 0 || values_.size() != n_ * n_) {
      throw UsageError("cost matrix must be square and non-empty: " + std::to_string(n_) +
                       " rows, " + std::to_string(values_.size()) + " entries");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw UsageError("cost matrix entries must be finite");
    }
  }

  static CostMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != rows.size()) throw UsageError("cost matrix must be square");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return CostMatrix(rows.size(), std::move(flat));
  }

  std::size_t size() const { return n_; }
  double operator()(std::size_t p, std::size_t q) const { return values_[p * n_ + q]; }

 private:
  std::size_t n_;
  std::vector<double> values_;
};

struct Assignment {
  std::vector<std::size_t> perm;  // row p is matched with column perm[p]
  double total_cost = 0.0;
};

inline double assignment_cost(const CostMatrix& cost, const std::vector<std::size_t>& perm) {
  double total = 0.0;
  for (std::size_t p = 0; p < perm.size(); ++p) total += cost(p, perm[p]);
  return total;
}

/// Minimum-cost perfect matching via the O(n^3) shortest augmenting path
/// method with row/column potentials. Only the optimal cost is guaranteed
/// when several matchings tie.
inline Assignment hungarian(const CostMatrix& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based internal indexing; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match_col(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match_col[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r0 = match_col[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost(r0 - 1, c - 1) - u[r0] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match_col[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match_col[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match_col[col0] = match_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  Assignment result;
  result.perm.assign(n, 0);
  for (std::size_t c = 1; c <= n; ++c) result.perm[match_col[c] - 1] = c - 1;
  result.total_cost = assignment_cost(cost, result.perm);
  return result;
}

/// Exhaustive minimum over all n! permutations; test oracle for n <= 8.
inline Assignment brute_force_assignment(const CostMatrix& cost) {
  const std::size_t n = cost.size();
  if (n > 8) {
    throw UsageError("brute_force_assignment: " + std::to_string(n) +
                     "! permutations exceeds the n <= 8 limit");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Assignment best{perm, assignment_cost(cost, perm)};
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double c = assignment_cost(cost, perm);
    if (c < best.total_cost) best = {perm, c};
  }
  return best;
}

}  // namespace gemzsl
