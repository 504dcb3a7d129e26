#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gemzsl/classifier.hpp"
#include "gemzsl/rng.hpp"
#include "gemzsl/tensor.hpp"

namespace gemzsl {

struct GridCell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const GridCell&) const = default;
};

/// One rendered attribute blob (pixel coordinates).
struct BlobRecord {
  std::size_t attribute = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t radius = 0;
  bool operator==(const BlobRecord&) const = default;
};

/// Parameters of the synthetic attribute-grounded dataset.
struct GenConfig {
  std::size_t num_seen = 20;
  std::size_t num_unseen = 5;
  std::size_t num_attributes = 12;
  std::size_t images_per_class = 40;
  std::size_t image_size = 32;
  std::size_t blob_radius = 5;
  std::uint64_t color_seed = 7;
  double color_min_distance = 0.3;
  double attribute_probability = 0.5;
  std::size_t min_active_attributes = 2;
  std::size_t word_dim = 50;
  std::size_t gaze_channels = 3;
  /// Gaze heatmaps live on this square grid (the encoder's feature resolution).
  std::size_t gaze_grid = 4;
  /// Blur width in grid cells; 0 selects max(1, grid / 4).
  double blur_sigma = 0.0;
  double noise = 0.05;
  double train_fraction = 0.8;
  std::uint64_t seed = 42;

  static constexpr std::size_t kChannels = 3;
  /// Rendered intensities in [0, 1] are stored shifted by this amount.
  static constexpr double kPixelOffset = 0.5;

  double effective_blur() const {
    return blur_sigma > 0.0 ? blur_sigma : std::max(1.0, static_cast<double>(gaze_grid) / 4.0);
  }

  void validate() const {
    if (num_attributes < 2) throw ConfigError("gen.num_attributes must be at least 2");
    if (num_seen < 2) throw ConfigError("gen.num_seen must be at least 2");
    if (num_unseen < 1) throw ConfigError("gen.num_unseen must be at least 1");
    if (images_per_class < 2) throw ConfigError("gen.images_per_class must be at least 2");
    if (image_size < 2 * blob_radius + 2) throw ConfigError("gen.image_size too small for blobs");
    if (gaze_grid == 0 || gaze_grid > image_size) throw ConfigError("gen.gaze_grid out of range");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw ConfigError("gen.train_fraction must lie in (0, 1)");
    if (!(attribute_probability > 0.0 && attribute_probability < 1.0))
      throw ConfigError("gen.attribute_probability must lie in (0, 1)");
    if (min_active_attributes < 1 || min_active_attributes > num_attributes)
      throw ConfigError("gen.min_active_attributes out of range");
    if (word_dim == 0) throw ConfigError("gen.word_dim must be positive");
    if (noise < 0.0) throw ConfigError("gen.noise must be non-negative");
  }
};

/// Images, labels, class attributes, splits and optional gaze supervision.
struct ZslDataset {
  std::size_t image_height = 0, image_width = 0, image_channels = 0;
  std::vector<float> images;  // N x H x W x ch
  std::vector<std::size_t> labels;

  ClassEmbeddings classes;
  std::vector<std::string> class_names;
  std::vector<std::string> attribute_names;

  std::size_t word_dim = 0;
  std::vector<double> word_vectors;  // K x De

  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::vector<std::vector<BlobRecord>> blobs;  // per image

  std::size_t gaze_channels = 0;  // 0: no gaze supervision
  std::size_t gaze_height = 0, gaze_width = 0;
  std::vector<float> gaze;  // N x D x gh x gw
  std::vector<std::vector<std::vector<GridCell>>> fixations;  // image -> channel -> points

  std::size_t num_images() const { return labels.size(); }
  std::size_t image_size() const { return image_height * image_width * image_channels; }
  bool has_gaze() const { return gaze_channels > 0; }

  std::span<const float> image(std::size_t i) const {
    return std::span<const float>(images).subspan(i * image_size(), image_size());
  }

  /// Gaze ground truth of image i in H x W x D layout.
  template <typename T>
  Tensor<T> gaze_target(std::size_t i) const {
    const std::size_t hw = gaze_height * gaze_width, d = gaze_channels;
    std::vector<T> out(hw * d);
    const float* src = gaze.data() + i * d * hw;
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t p = 0; p < hw; ++p) out[p * d + c] = static_cast<T>(src[c * hw + p]);
    return Tensor<T>({gaze_height, gaze_width, d}, std::move(out));
  }

  template <typename T>
  Tensor<T> image_tensor(std::size_t i) const {
    const auto src = image(i);
    return Tensor<T>({image_height, image_width, image_channels},
                     std::vector<T>(src.begin(), src.end()));
  }

  template <typename T>
  Tensor<T> word_tensor() const {
    return Tensor<T>({classes.num_attributes, word_dim},
                     std::vector<T>(word_vectors.begin(), word_vectors.end()));
  }

  std::vector<std::size_t> test_indices_of(bool seen_side) const {
    std::vector<std::size_t> out;
    for (auto i : test_indices)
      if (classes.is_seen(labels[i]) == seen_side) out.push_back(i);
    return out;
  }

  void validate() const {
    classes.validate();
    const std::size_t n = num_images();
    if (images.size() != n * image_size()) throw DataError("dataset: image buffer size mismatch");
    for (auto y : labels)
      if (y >= classes.num_classes) throw DataError("dataset: label out of range");
    for (double v : classes.phi)
      if (v < 0.0 || v > 1.0) throw DataError("dataset: attribute values must lie in [0, 1]");
    if (word_vectors.size() != classes.num_attributes * word_dim)
      throw DataError("dataset: word vector matrix size mismatch");
    for (auto i : train_indices) {
      if (i >= n) throw DataError("dataset: train index out of range");
      if (!classes.is_seen(labels[i])) throw DataError("dataset: training image of an unseen class");
    }
    for (auto i : test_indices)
      if (i >= n) throw DataError("dataset: test index out of range");
    if (has_gaze()) {
      const std::size_t hw = gaze_height * gaze_width;
      if (gaze.size() != n * gaze_channels * hw) throw DataError("dataset: gaze buffer size mismatch");
      for (std::size_t c = 0; c < n * gaze_channels; ++c) {
        const auto first = gaze.begin() + static_cast<std::ptrdiff_t>(c * hw);
        const float mx = *std::max_element(first, first + static_cast<std::ptrdiff_t>(hw));
        const float mn = *std::min_element(first, first + static_cast<std::ptrdiff_t>(hw));
        if (mn < 0.0f || (mx != 0.0f && mx != 1.0f))
          throw DataError("dataset: gaze channel not normalized to max 1");
      }
      if (fixations.size() != n) throw DataError("dataset: fixation list size mismatch");
    }
  }
};

/// Sum of isotropic Gaussians centred at `points`, scaled to a maximum of 1.
/// An empty point list yields the all-zero map.
inline Tensor<double> fixations_to_heatmap(const std::vector<GridCell>& points, std::size_t height,
                                           std::size_t width, double blur_sigma) {
  if (height == 0 || width == 0) throw UsageError("fixations_to_heatmap: empty grid");
  if (!(blur_sigma > 0.0)) throw UsageError("fixations_to_heatmap: blur sigma must be positive");
  for (const auto& p : points) {
    if (p.row >= height || p.col >= width) {
      throw UsageError("fixation (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                       ") lies outside the " + std::to_string(height) + "x" +
                       std::to_string(width) + " grid");
    }
  }
  std::vector<double> map(height * width, 0.0);
  const double denom = 2.0 * blur_sigma * blur_sigma;
  for (const auto& p : points) {
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double di = static_cast<double>(i) - static_cast<double>(p.row);
        const double dj = static_cast<double>(j) - static_cast<double>(p.col);
        map[i * width + j] += std::exp(-(di * di + dj * dj) / denom);
      }
    }
  }
  if (!points.empty()) {
    const double mx = *std::max_element(map.begin(), map.end());
    for (auto& v : map) v /= mx;
  }
  return Tensor<double>({height, width}, std::move(map));
}

namespace detail {

inline std::vector<std::array<double, 3>> attribute_colors(const GenConfig& cfg) {
  Rng rng(cfg.color_seed);
  std::vector<std::array<double, 3>> colors;
  double min_dist = cfg.color_min_distance;
  std::size_t attempts = 0;
  while (colors.size() < cfg.num_attributes) {
    std::array<double, 3> c{rng.uniform(), rng.uniform(), rng.uniform()};
    bool ok = true;
    for (const auto& o : colors) {
      const double d = std::hypot(c[0] - o[0], c[1] - o[1], c[2] - o[2]);
      ok = ok && d >= min_dist;
    }
    if (ok) colors.push_back(c);
    if (++attempts % 10000 == 0) min_dist *= 0.9;  // relax for very large K
  }
  return colors;
}

inline std::vector<double> draw_attribute_matrix(const GenConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.num_seen + cfg.num_unseen, k = cfg.num_attributes;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<double> phi(n * k, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t active = 0;
      for (std::size_t a = 0; a < k; ++a) {
        const bool on = rng.bernoulli(cfg.attribute_probability);
        phi[c * k + a] = on ? 1.0 : 0.0;
        active += on;
      }
      if (active < cfg.min_active_attributes) goto retry;
      for (std::size_t o = 0; o < c; ++o) {
        if (std::equal(phi.begin() + o * k, phi.begin() + (o + 1) * k, phi.begin() + c * k))
          goto retry;
      }
    }
    // Every attribute must be both present and absent among seen classes.
    for (std::size_t a = 0; a < k; ++a) {
      std::size_t on = 0;
      for (std::size_t c = 0; c < cfg.num_seen; ++c) on += phi[c * k + a] > 0.0;
      if (on == 0 || on == cfg.num_seen) goto retry;
    }
    return phi;
  retry:;
  }
  throw GenerationError("could not draw " + std::to_string(n) + " distinct attribute rows over " +
                        std::to_string(k) + " attributes in 1000 attempts");
}

}  // namespace detail

/// Builds the synthetic dataset. Classes 0..num_seen-1 are seen, the rest
/// unseen; images are stored class by class. Each image shows its class's
/// active attributes as colored discs on a noisy gray background, with
/// intensities centred on zero. Gaze channels mark the blob centres of the
/// class's D most distinctive attributes (lowest frequency among seen classes).
inline ZslDataset generate_synthetic(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t n_classes = cfg.num_seen + cfg.num_unseen, k = cfg.num_attributes;
  const std::size_t size = cfg.image_size, ch = GenConfig::kChannels;

  ZslDataset ds;
  ds.image_height = ds.image_width = size;
  ds.image_channels = ch;
  ds.classes.num_classes = n_classes;
  ds.classes.num_attributes = k;
  ds.classes.phi = detail::draw_attribute_matrix(cfg, rng);
  for (std::size_t c = 0; c < n_classes; ++c) {
    (c < cfg.num_seen ? ds.classes.seen : ds.classes.unseen).push_back(c);
    ds.class_names.push_back("class_" + std::to_string(c));
  }
  for (std::size_t a = 0; a < k; ++a) ds.attribute_names.push_back("attr_" + std::to_string(a));

  ds.word_dim = cfg.word_dim;
  ds.word_vectors.resize(k * cfg.word_dim);
  for (std::size_t a = 0; a < k; ++a) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cfg.word_dim; ++j) {
      const double v = rng.normal();
      ds.word_vectors[a * cfg.word_dim + j] = v;
      ss += v * v;
    }
    const double norm = std::sqrt(ss);
    for (std::size_t j = 0; j < cfg.word_dim; ++j) ds.word_vectors[a * cfg.word_dim + j] /= norm;
  }

  // Distinctiveness: ascending frequency among seen classes, ties by index.
  std::vector<std::size_t> frequency(k, 0);
  for (auto c : ds.classes.seen)
    for (std::size_t a = 0; a < k; ++a) frequency[a] += ds.classes.phi[c * k + a] > 0.0;

  const auto colors = detail::attribute_colors(cfg);
  const std::size_t n_images = n_classes * cfg.images_per_class;
  ds.images.assign(n_images * size * size * ch, 0.0f);
  ds.labels.resize(n_images);
  ds.blobs.resize(n_images);
  const std::size_t grid = cfg.gaze_grid, D = cfg.gaze_channels;
  if (D > 0) {
    ds.gaze_channels = D;
    ds.gaze_height = ds.gaze_width = grid;
    ds.gaze.assign(n_images * D * grid * grid, 0.0f);
    ds.fixations.resize(n_images);
  }

  const long r = static_cast<long>(cfg.blob_radius);
  for (std::size_t img = 0; img < n_images; ++img) {
    const std::size_t label = img / cfg.images_per_class;
    ds.labels[img] = label;
    Rng irng = Rng::derived(cfg.seed, img);
    float* pixels = ds.images.data() + img * size * size * ch;
    const double background = irng.uniform(0.3, 0.7);
    for (std::size_t p = 0; p < size * size * ch; ++p)
      pixels[p] = static_cast<float>(background - GenConfig::kPixelOffset + irng.normal(0.0, cfg.noise));

    std::vector<std::size_t> active;
    for (std::size_t a = 0; a < k; ++a)
      if (ds.classes.phi[label * k + a] > 0.0) active.push_back(a);
    irng.shuffle(active.begin(), active.end());

    auto& blobs = ds.blobs[img];
    for (auto a : active) {
      BlobRecord blob{a, 0, 0, cfg.blob_radius};
      for (int attempt = 0; attempt < 30; ++attempt) {
        blob.row = cfg.blob_radius + irng.below(size - 2 * cfg.blob_radius);
        blob.col = cfg.blob_radius + irng.below(size - 2 * cfg.blob_radius);
        bool clear = true;
        for (const auto& o : blobs) {
          const double d = std::hypot(static_cast<double>(blob.row) - static_cast<double>(o.row),
                                      static_cast<double>(blob.col) - static_cast<double>(o.col));
          clear = clear && d > 2.0 * static_cast<double>(cfg.blob_radius);
        }
        if (clear) break;
      }
      blobs.push_back(blob);
      const long br = static_cast<long>(blob.row), bc = static_cast<long>(blob.col);
      for (long y = br - r; y <= br + r; ++y) {
        for (long x = bc - r; x <= bc + r; ++x) {
          if (y < 0 || x < 0 || y >= static_cast<long>(size) || x >= static_cast<long>(size)) continue;
          if ((y - br) * (y - br) + (x - bc) * (x - bc) > r * r) continue;
          float* px = pixels + (static_cast<std::size_t>(y) * size + static_cast<std::size_t>(x)) * ch;
          for (std::size_t c = 0; c < ch; ++c)
            px[c] = static_cast<float>(colors[a][c] - GenConfig::kPixelOffset +
                                       irng.normal(0.0, cfg.noise));
        }
      }
    }

    if (D > 0) {
      auto ranked = active;
      std::sort(ranked.begin(), ranked.end(), [&](std::size_t x, std::size_t y) {
        return frequency[x] != frequency[y] ? frequency[x] < frequency[y] : x < y;
      });
      auto& fix = ds.fixations[img];
      fix.assign(D, {});
      for (std::size_t d = 0; d < D && d < ranked.size(); ++d) {
        const auto& blob = *std::find_if(blobs.begin(), blobs.end(),
                                         [&](const BlobRecord& b) { return b.attribute == ranked[d]; });
        fix[d].push_back({blob.row * grid / size, blob.col * grid / size});
        const auto heat = fixations_to_heatmap(fix[d], grid, grid, cfg.effective_blur());
        float* dst = ds.gaze.data() + (img * D + d) * grid * grid;
        for (std::size_t p = 0; p < grid * grid; ++p) dst[p] = static_cast<float>(heat[p]);
      }
    }
  }

  // Splits: seen classes contribute train and test images, unseen only test.
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<std::size_t> idx(cfg.images_per_class);
    std::iota(idx.begin(), idx.end(), c * cfg.images_per_class);
    if (c < cfg.num_seen) {
      rng.shuffle(idx.begin(), idx.end());
      const auto n_train = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::lround(cfg.train_fraction * cfg.images_per_class)), 1,
          cfg.images_per_class - 1);
      ds.train_indices.insert(ds.train_indices.end(), idx.begin(), idx.begin() + n_train);
      ds.test_indices.insert(ds.test_indices.end(), idx.begin() + n_train, idx.end());
    } else {
      ds.test_indices.insert(ds.test_indices.end(), idx.begin(), idx.end());
    }
  }
  std::sort(ds.train_indices.begin(), ds.train_indices.end());
  std::sort(ds.test_indices.begin(), ds.test_indices.end());
  ds.validate();
  return ds;
}

/// One M-way N-shot mini-batch: dataset indices with their labels, class by class.
struct Episode {
  std::vector<std::size_t> indices;
  std::vector<std::size_t> labels;
};

/// Samples M distinct seen classes and N distinct training images of each,
/// uniformly among eligible choices.
inline Episode sample_episode(const ZslDataset& ds, std::size_t m, std::size_t n, Rng& rng) {
  if (m == 0 || n == 0) throw ConfigError("episode needs M >= 1 and N >= 1");
  std::vector<std::vector<std::size_t>> per_class(ds.classes.num_classes);
  for (auto i : ds.train_indices) per_class[ds.labels[i]].push_back(i);
  std::vector<std::size_t> eligible;
  for (auto c : ds.classes.seen)
    if (per_class[c].size() >= n) eligible.push_back(c);
  if (eligible.size() < m) {
    throw ConfigError("episode needs " + std::to_string(m) + " seen classes with at least " +
                      std::to_string(n) + " training images, only " +
                      std::to_string(eligible.size()) + " qualify");
  }
  Episode ep;
  for (auto ci : rng.sample_without_replacement(eligible.size(), m)) {
    const auto& pool = per_class[eligible[ci]];
    for (auto ii : rng.sample_without_replacement(pool.size(), n)) {
      ep.indices.push_back(pool[ii]);
      ep.labels.push_back(eligible[ci]);
    }
  }
  return ep;
}

}  // namespace gemzsl
