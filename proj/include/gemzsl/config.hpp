#pragma once

#include <zlib.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "gemzsl/data.hpp"
#include "gemzsl/encoders.hpp"
#include "gemzsl/train.hpp"

namespace gemzsl {

inline std::uint32_t crc32_of(const void* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* bytes = static_cast<const Bytef*>(data);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, bytes, chunk);
    bytes += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(key + ": expected a real number, got '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + s + "'");
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

}  // namespace detail

/// Merged generation, encoder and training configuration, serialized as a
/// document of `section.key = value` lines ('#' starts a comment).
struct RunConfig {
  GenConfig gen;
  EncoderConfig encoder;
  TrainConfig train;

  struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
  };

  static const std::vector<Field>& fields() {
    using namespace detail;
    static const std::vector<Field> table = [] {
      std::vector<Field> f;
      auto add_uint = [&f](std::string key, auto member_of) {
        f.push_back({key,
                     [member_of](const RunConfig& c) { return std::to_string(member_of(c)); },
                     [member_of, key](RunConfig& c, const std::string& v) {
                       member_of(c) = static_cast<std::remove_reference_t<decltype(member_of(c))>>(
                           parse_uint(key, v));
                     }});
      };
      auto add_real = [&f](std::string key, auto member_of) {
        f.push_back({key,
                     [member_of](const RunConfig& c) { return format_double(member_of(c)); },
                     [member_of, key](RunConfig& c, const std::string& v) { member_of(c) = parse_double(key, v); }});
      };
      auto add_bool = [&f](std::string key, auto member_of) {
        f.push_back({key,
                     [member_of](const RunConfig& c) { return member_of(c) ? std::string("true") : std::string("false"); },
                     [member_of, key](RunConfig& c, const std::string& v) { member_of(c) = parse_bool(key, v); }});
      };
#define GEMZSL_M(expr) [](auto& c) -> auto& { return c.expr; }
      add_uint("gen.num_seen", GEMZSL_M(gen.num_seen));
      add_uint("gen.num_unseen", GEMZSL_M(gen.num_unseen));
      add_uint("gen.num_attributes", GEMZSL_M(gen.num_attributes));
      add_uint("gen.images_per_class", GEMZSL_M(gen.images_per_class));
      add_uint("gen.image_size", GEMZSL_M(gen.image_size));
      add_uint("gen.blob_radius", GEMZSL_M(gen.blob_radius));
      add_uint("gen.color_seed", GEMZSL_M(gen.color_seed));
      add_real("gen.color_min_distance", GEMZSL_M(gen.color_min_distance));
      add_real("gen.attribute_probability", GEMZSL_M(gen.attribute_probability));
      add_uint("gen.min_active_attributes", GEMZSL_M(gen.min_active_attributes));
      add_uint("gen.word_dim", GEMZSL_M(gen.word_dim));
      add_uint("gen.gaze_channels", GEMZSL_M(gen.gaze_channels));
      add_uint("gen.gaze_grid", GEMZSL_M(gen.gaze_grid));
      add_real("gen.blur_sigma", GEMZSL_M(gen.blur_sigma));
      add_real("gen.noise", GEMZSL_M(gen.noise));
      add_real("gen.train_fraction", GEMZSL_M(gen.train_fraction));
      add_uint("gen.seed", GEMZSL_M(gen.seed));

      f.push_back({"encoder.stage_channels",
                   [](const RunConfig& c) {
                     std::string s;
                     for (auto v : c.encoder.stage_channels) s += (s.empty() ? "" : ",") + std::to_string(v);
                     return s;
                   },
                   [](RunConfig& c, const std::string& v) {
                     c.encoder.stage_channels = parse_list("encoder.stage_channels", v);
                     c.encoder.feature_channels = c.encoder.stage_channels.back();
                   }});
      add_uint("encoder.kernel", GEMZSL_M(encoder.kernel));
      add_uint("encoder.stride", GEMZSL_M(encoder.stride));
      add_uint("encoder.padding", GEMZSL_M(encoder.padding));
      add_uint("encoder.feature_channels", GEMZSL_M(encoder.feature_channels));
      add_uint("encoder.word_hidden", GEMZSL_M(encoder.word_hidden));

      add_real("train.lambda1", GEMZSL_M(train.lambda1));
      add_real("train.lambda2", GEMZSL_M(train.lambda2));
      add_real("train.lambda3", GEMZSL_M(train.lambda3));
      f.push_back({"train.sigma",
                   [](const RunConfig& c) {
                     const auto v = format_double(c.train.sigma);
                     return c.train.learnable_sigma ? "learnable:" + v : v;
                   },
                   [](RunConfig& c, const std::string& v) {
                     const std::string prefix = "learnable";
                     if (v.rfind(prefix, 0) == 0) {
                       c.train.learnable_sigma = true;
                       if (v.size() > prefix.size()) {
                         if (v[prefix.size()] != ':')
                           throw ConfigError("train.sigma: expected a number, 'learnable' or 'learnable:<init>'");
                         c.train.sigma = parse_double("train.sigma", v.substr(prefix.size() + 1));
                       }
                     } else {
                       c.train.learnable_sigma = false;
                       c.train.sigma = parse_double("train.sigma", v);
                     }
                   }});
      add_real("train.gamma", GEMZSL_M(train.gamma));
      add_real("train.lr", GEMZSL_M(train.lr));
      add_real("train.momentum", GEMZSL_M(train.momentum));
      add_real("train.weight_decay", GEMZSL_M(train.weight_decay));
      add_real("train.grad_clip", GEMZSL_M(train.grad_clip));
      add_uint("train.classes_per_episode", GEMZSL_M(train.classes_per_episode));
      add_uint("train.images_per_class", GEMZSL_M(train.images_per_class));
      add_uint("train.batches_per_epoch", GEMZSL_M(train.batches_per_epoch));
      add_uint("train.epochs", GEMZSL_M(train.epochs));
      add_uint("train.seed", GEMZSL_M(train.seed));
      add_bool("train.use_gaze", GEMZSL_M(train.use_gaze));
      add_bool("train.distance_per_attribute", GEMZSL_M(train.distance_per_attribute));
      f.push_back({"train.precision",
                   [](const RunConfig& c) { return std::string(c.train.precision == Precision::kF64 ? "f64" : "f32"); },
                   [](RunConfig& c, const std::string& v) {
                     if (v == "f64") c.train.precision = Precision::kF64;
                     else if (v == "f32") c.train.precision = Precision::kF32;
                     else throw ConfigError("train.precision: expected f64 or f32, got '" + v + "'");
                   }});
      f.push_back({"train.similarity",
                   [](const RunConfig& c) { return std::string(c.train.similarity == Similarity::kCosine ? "cosine" : "dot"); },
                   [](RunConfig& c, const std::string& v) {
                     if (v == "cosine") c.train.similarity = Similarity::kCosine;
                     else if (v == "dot") c.train.similarity = Similarity::kDot;
                     else throw ConfigError("train.similarity: expected cosine or dot, got '" + v + "'");
                   }});
#undef GEMZSL_M
      return f;
    }();
    return table;
  }

  /// Assigns one key; unknown keys are rejected.
  void set(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
      if (f.key == key) {
        f.set(*this, value);
        return;
      }
    }
    throw ConfigError("unknown configuration key '" + key + "'");
  }

  std::string get(const std::string& key) const {
    for (const auto& f : fields())
      if (f.key == key) return f.get(*this);
    throw ConfigError("unknown configuration key '" + key + "'");
  }

  void validate() const {
    gen.validate();
    encoder.validate();
    train.validate();
  }

  /// Applies a configuration document on top of the current values.
  void merge_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
      set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
  }

  static RunConfig from_text(const std::string& text) {
    RunConfig c;
    c.merge_text(text);
    return c;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read configuration file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
  }

  /// Configuration document. When `resolved`, lambda3 is written as its
  /// effective value (0 without gaze supervision).
  std::string to_text(bool resolved = true) const {
    RunConfig shown = *this;
    if (resolved) shown.train = train.resolved();
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(shown) + "\n";
    return out;
  }

  std::string hash() const {
    const auto text = to_text();
    return hex32(crc32_of(text.data(), text.size()));
  }
};

/// Desk-scale synthetic preset: 20 seen / 5 unseen classes, K = 12,
/// 40 images per class, 32x32x3 images and a 4x4x64 feature map.
inline RunConfig synthetic_preset() {
  RunConfig c;
  // From scratch on 32x32 images; 1e-3 barely moves the encoder in 50 epochs.
  c.train.lr = 0.01;
  c.train.grad_clip = 5.0;
  // The summed distance term is 30-50 at init and swamps the class loss at lambda1 = 0.2.
  c.train.distance_per_attribute = true;
  return c;
}

}  // namespace gemzsl
