#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "gemzsl/config.hpp"
#include "gemzsl/data.hpp"
#include "gemzsl/model.hpp"

namespace gemzsl {

inline constexpr int kDatasetVersion = 1;
inline constexpr int kCheckpointVersion = 1;

namespace io_detail {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename Float>
void append_le(std::string& out, Float v) {
  using Bits = std::conditional_t<sizeof(Float) == 4, std::uint32_t, std::uint64_t>;
  const auto bits = std::bit_cast<Bits>(v);
  for (std::size_t i = 0; i < sizeof(Bits); ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename Float>
Float read_le(const char* p) {
  using Bits = std::conditional_t<sizeof(Float) == 4, std::uint32_t, std::uint64_t>;
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(Bits); ++i)
    bits |= static_cast<Bits>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<Float>(bits);
}

inline std::string encode_floats(std::span<const float> values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (float v : values) append_le(out, v);
  return out;
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw DataError("failed writing " + path.string());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

/// Reads a blob and checks its declared size and CRC32.
inline std::string read_blob(const fs::path& path, std::size_t expected_bytes,
                             std::uint32_t expected_crc) {
  auto bytes = read_file(path);
  if (bytes.size() != expected_bytes) {
    throw TruncatedBlobError(path.filename().string() + ": expected " +
                             std::to_string(expected_bytes) + " bytes, found " +
                             std::to_string(bytes.size()));
  }
  const auto crc = crc32_of(bytes.data(), bytes.size());
  if (crc != expected_crc) {
    throw ChecksumError(path.filename().string() + ": CRC32 " + hex32(crc) +
                        " does not match manifest " + hex32(expected_crc));
  }
  return bytes;
}

inline std::vector<float> decode_floats(const std::string& bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = read_le<float>(bytes.data() + 4 * i);
  return out;
}

inline json read_manifest(const fs::path& dir, const std::string& format, int version) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw DataError("manifest.json in " + dir.string() + " is not valid JSON: " + e.what());
  }
  if (manifest.value("format", std::string()) != format)
    throw DataError(dir.string() + " is not a " + format + " directory");
  const int found = manifest.value("version", -1);
  if (found != version) {
    throw VersionError(dir.string() + ": unsupported " + format + " version " +
                       std::to_string(found) + " (expected " + std::to_string(version) + ")");
  }
  return manifest;
}

/// Writes a directory via a `.tmp` sibling renamed into place once complete.
template <typename Fill>
void write_directory_atomically(const fs::path& dir, Fill&& fill) {
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  fill(tmp);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

}  // namespace io_detail

/// Directory layout: manifest.json plus images.bin and (optionally) gaze.bin,
/// raw little-endian float32, sample-major and row-major.
inline void save_dataset(const std::filesystem::path& dir, const ZslDataset& ds) {
  using io_detail::json;
  ds.validate();
  const auto images = io_detail::encode_floats(ds.images);
  json m;
  m["format"] = "gemzsl-dataset";
  m["version"] = kDatasetVersion;
  m["images"] = {{"file", "images.bin"},
                 {"dtype", "float32-le"},
                 {"count", ds.num_images()},
                 {"height", ds.image_height},
                 {"width", ds.image_width},
                 {"channels", ds.image_channels},
                 {"bytes", images.size()},
                 {"crc32", crc32_of(images.data(), images.size())}};
  m["labels"] = ds.labels;
  m["classes"] = {{"names", ds.class_names}, {"seen", ds.classes.seen}, {"unseen", ds.classes.unseen}};
  m["attributes"] = {{"names", ds.attribute_names},
                     {"num_classes", ds.classes.num_classes},
                     {"num_attributes", ds.classes.num_attributes},
                     {"phi", ds.classes.phi}};
  m["word_vectors"] = {{"dim", ds.word_dim}, {"values", ds.word_vectors}};
  m["splits"] = {{"train", ds.train_indices}, {"test", ds.test_indices}};
  json blobs = json::array();
  for (const auto& per_image : ds.blobs) {
    json list = json::array();
    for (const auto& b : per_image) list.push_back({b.attribute, b.row, b.col, b.radius});
    blobs.push_back(std::move(list));
  }
  m["blobs"] = std::move(blobs);
  std::string gaze;
  if (ds.has_gaze()) {
    gaze = io_detail::encode_floats(ds.gaze);
    json fix = json::array();
    for (const auto& per_image : ds.fixations) {
      json channels = json::array();
      for (const auto& pts : per_image) {
        json list = json::array();
        for (const auto& p : pts) list.push_back({p.row, p.col});
        channels.push_back(std::move(list));
      }
      fix.push_back(std::move(channels));
    }
    m["gaze"] = {{"file", "gaze.bin"},
                 {"dtype", "float32-le"},
                 {"layout", "image,channel,row,col"},
                 {"channels", ds.gaze_channels},
                 {"height", ds.gaze_height},
                 {"width", ds.gaze_width},
                 {"bytes", gaze.size()},
                 {"crc32", crc32_of(gaze.data(), gaze.size())},
                 {"fixations", std::move(fix)}};
  } else {
    m["gaze"] = nullptr;
  }
  io_detail::write_directory_atomically(dir, [&](const std::filesystem::path& tmp) {
    io_detail::write_file(tmp / "images.bin", images);
    if (ds.has_gaze()) io_detail::write_file(tmp / "gaze.bin", gaze);
    io_detail::write_file(tmp / "manifest.json", m.dump(1) + "\n");
  });
}

inline ZslDataset load_dataset(const std::filesystem::path& dir) {
  using io_detail::json;
  const json m = io_detail::read_manifest(dir, "gemzsl-dataset", kDatasetVersion);
  ZslDataset ds;
  try {
    const auto& im = m.at("images");
    ds.image_height = im.at("height");
    ds.image_width = im.at("width");
    ds.image_channels = im.at("channels");
    const std::size_t count = im.at("count");
    const std::size_t bytes = count * ds.image_size() * 4;
    if (im.at("bytes").get<std::size_t>() != bytes)
      throw DataError("images.bin: manifest size disagrees with declared shape");
    ds.images = io_detail::decode_floats(
        io_detail::read_blob(dir / im.at("file").get<std::string>(), bytes, im.at("crc32")));
    ds.labels = m.at("labels").get<std::vector<std::size_t>>();
    ds.class_names = m.at("classes").at("names").get<std::vector<std::string>>();
    ds.classes.seen = m.at("classes").at("seen").get<std::vector<std::size_t>>();
    ds.classes.unseen = m.at("classes").at("unseen").get<std::vector<std::size_t>>();
    const auto& at = m.at("attributes");
    ds.attribute_names = at.at("names").get<std::vector<std::string>>();
    ds.classes.num_classes = at.at("num_classes");
    ds.classes.num_attributes = at.at("num_attributes");
    ds.classes.phi = at.at("phi").get<std::vector<double>>();
    ds.word_dim = m.at("word_vectors").at("dim");
    ds.word_vectors = m.at("word_vectors").at("values").get<std::vector<double>>();
    ds.train_indices = m.at("splits").at("train").get<std::vector<std::size_t>>();
    ds.test_indices = m.at("splits").at("test").get<std::vector<std::size_t>>();
    for (const auto& per_image : m.at("blobs")) {
      auto& list = ds.blobs.emplace_back();
      for (const auto& b : per_image) list.push_back({b.at(0), b.at(1), b.at(2), b.at(3)});
    }
    if (!m.at("gaze").is_null()) {
      const auto& gz = m.at("gaze");
      ds.gaze_channels = gz.at("channels");
      ds.gaze_height = gz.at("height");
      ds.gaze_width = gz.at("width");
      const std::size_t gbytes = count * ds.gaze_channels * ds.gaze_height * ds.gaze_width * 4;
      if (gz.at("bytes").get<std::size_t>() != gbytes)
        throw DataError("gaze.bin: manifest size disagrees with declared shape");
      ds.gaze = io_detail::decode_floats(
          io_detail::read_blob(dir / gz.at("file").get<std::string>(), gbytes, gz.at("crc32")));
      for (const auto& per_image : gz.at("fixations")) {
        auto& channels = ds.fixations.emplace_back();
        for (const auto& pts : per_image) {
          auto& list = channels.emplace_back();
          for (const auto& p : pts) list.push_back({p.at(0), p.at(1)});
        }
      }
    }
  } catch (const io_detail::json::exception& e) {
    throw DataError("malformed dataset manifest in " + dir.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

/// Parameters, their momentum buffers, the run configuration and the epoch
/// counter of a training run.
template <typename T>
struct Checkpoint {
  ModelParams<T> params;
  RunConfig config;
  std::size_t epoch = 0;
};

namespace io_detail {

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "float32-le" : "float64-le";
}

}  // namespace io_detail

/// Directory layout: manifest.json plus tensors.bin, the parameter tensors
/// followed by their momentum buffers, concatenated in manifest order.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const ModelParams<T>& params,
                     const RunConfig& config, std::size_t epoch) {
  using io_detail::json;
  std::string blob;
  json tensors = json::array();
  auto append = [&](const std::string& name, const Shape& shape, std::span<const T> values) {
    const std::size_t offset = blob.size();
    for (T v : values) io_detail::append_le(blob, v);
    tensors.push_back({{"name", name},
                       {"shape", shape},
                       {"offset", offset},
                       {"count", values.size()},
                       {"crc32", crc32_of(blob.data() + offset, blob.size() - offset)}});
  };
  const auto named = params.named_parameters();
  for (const auto& [name, t] : named) append(name, t.shape(), t.values());
  for (std::size_t i = 0; i < named.size() && i < params.velocity.size(); ++i)
    append("velocity/" + named[i].first, named[i].second.shape(), params.velocity[i]);

  json snapshot = json::object();
  for (const auto& f : RunConfig::fields()) snapshot[f.key] = f.get(config);

  json m;
  m["format"] = "gemzsl-checkpoint";
  m["version"] = kCheckpointVersion;
  m["dtype"] = io_detail::dtype_name<T>();
  m["epoch"] = epoch;
  m["model"] = {{"input", {params.encoder.input_height, params.encoder.input_width,
                           params.encoder.input_channels}},
                {"word_dim", params.encoder.word_dim},
                {"stage_channels", params.encoder.stage_channels},
                {"kernel", params.encoder.kernel},
                {"stride", params.encoder.stride},
                {"padding", params.encoder.padding},
                {"word_hidden", params.encoder.word_hidden},
                {"num_attributes", params.num_attributes},
                {"gaze_channels", params.gaze_channels},
                {"learnable_sigma", params.sigma.requires_grad()}};
  m["config"] = std::move(snapshot);
  m["tensors_file"] = {{"file", "tensors.bin"}, {"bytes", blob.size()},
                       {"crc32", crc32_of(blob.data(), blob.size())}};
  m["tensors"] = std::move(tensors);
  io_detail::write_directory_atomically(dir, [&](const std::filesystem::path& tmp) {
    io_detail::write_file(tmp / "tensors.bin", blob);
    io_detail::write_file(tmp / "manifest.json", m.dump(1) + "\n");
  });
}

/// Reads the manifest dtype ("float32-le" or "float64-le") of a checkpoint.
inline std::string checkpoint_dtype(const std::filesystem::path& dir) {
  return io_detail::read_manifest(dir, "gemzsl-checkpoint", kCheckpointVersion).at("dtype");
}

/// Fills `params` from a checkpoint. Every tensor must match the shape
/// `params` already has; a mismatch names the offending tensor.
template <typename T>
std::size_t load_checkpoint_into(const std::filesystem::path& dir, ModelParams<T>& params,
                                 RunConfig* config_out = nullptr) {
  using io_detail::json;
  const json m = io_detail::read_manifest(dir, "gemzsl-checkpoint", kCheckpointVersion);
  try {
    const std::string dtype = m.at("dtype");
    const std::size_t width = dtype == "float32-le" ? 4 : dtype == "float64-le" ? 8 : 0;
    if (width == 0) throw DataError("checkpoint: unknown dtype " + dtype);
    const auto& tf = m.at("tensors_file");
    const auto blob =
        io_detail::read_blob(dir / tf.at("file").get<std::string>(), tf.at("bytes"), tf.at("crc32"));
    std::map<std::string, const json*> by_name;
    for (const auto& t : m.at("tensors")) by_name[t.at("name")] = &t;

    auto fetch = [&](const std::string& name, const Shape& expected, std::span<T> dst) {
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw DataError("checkpoint is missing tensor " + name);
      const json& t = *it->second;
      const Shape shape = t.at("shape").get<Shape>();
      if (shape != expected) {
        throw DimensionError("checkpoint tensor " + name + " has shape " + shape_string(shape) +
                             ", model expects " + shape_string(expected));
      }
      const std::size_t offset = t.at("offset"), count = t.at("count");
      if (count != dst.size() || offset + count * width > blob.size())
        throw TruncatedBlobError("checkpoint tensor " + name + " exceeds tensors.bin");
      for (std::size_t i = 0; i < count; ++i) {
        const char* p = blob.data() + offset + i * width;
        dst[i] = width == 4 ? static_cast<T>(io_detail::read_le<float>(p))
                            : static_cast<T>(io_detail::read_le<double>(p));
      }
    };
    auto named = params.named_parameters();
    params.reset_velocity();
    for (std::size_t i = 0; i < named.size(); ++i) {
      auto& [name, tensor] = named[i];
      fetch(name, tensor.shape(), tensor.mutable_values());
      if (by_name.count("velocity/" + name))
        fetch("velocity/" + name, tensor.shape(), params.velocity[i]);
    }
    if (config_out) {
      RunConfig c;
      for (const auto& [key, value] : m.at("config").items()) c.set(key, value.template get<std::string>());
      *config_out = c;
    }
    return m.at("epoch");
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
}

/// Rebuilds the model described by a checkpoint and loads its tensors.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir) {
  using io_detail::json;
  const json m = io_detail::read_manifest(dir, "gemzsl-checkpoint", kCheckpointVersion);
  Checkpoint<T> ck;
  try {
    for (const auto& [key, value] : m.at("config").items()) ck.config.set(key, value.template get<std::string>());
    const auto& model = m.at("model");
    // The model block, not the run config, is authoritative for the architecture.
    EncoderConfig enc;
    enc.stage_channels = model.at("stage_channels").get<std::vector<std::size_t>>();
    enc.feature_channels = enc.stage_channels.empty() ? 0 : enc.stage_channels.back();
    enc.kernel = model.at("kernel");
    enc.stride = model.at("stride");
    enc.padding = model.at("padding");
    enc.word_hidden = model.at("word_hidden");
    enc.input_height = model.at("input").at(0);
    enc.input_width = model.at("input").at(1);
    enc.input_channels = model.at("input").at(2);
    enc.word_dim = model.at("word_dim");
    ck.params = ModelParams<T>::init(enc, model.at("num_attributes"), model.at("gaze_channels"),
                                     ck.config.train.sigma, model.at("learnable_sigma"), 0);
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  ck.epoch = load_checkpoint_into(dir, ck.params);
  return ck;
}

}  // namespace gemzsl
