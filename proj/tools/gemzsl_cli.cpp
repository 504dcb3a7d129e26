// gemzsl command-line driver: dataset generation, training, evaluation,
// gaze metrics, map export and the gradient self-check.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gemzsl/gemzsl.hpp"

namespace fs = std::filesystem;
using namespace gemzsl;

namespace {

enum ExitCode { kOk = 0, kConfigFailure = 2, kDataFailure = 3, kNumericalFailure = 4 };

// GEMZSL_LOG selects stderr verbosity: quiet, info (default) or debug.
enum class Verbosity { kQuiet, kInfo, kDebug };

Verbosity verbosity() {
  static const Verbosity v = [] {
    const char* env = std::getenv("GEMZSL_LOG");
    const std::string s = env ? env : "info";
    if (s == "quiet") return Verbosity::kQuiet;
    if (s == "debug") return Verbosity::kDebug;
    return Verbosity::kInfo;
  }();
  return v;
}

void info(const std::string& msg) {
  if (verbosity() >= Verbosity::kInfo) std::cerr << msg << "\n";
}

void debug(const std::string& msg) {
  if (verbosity() >= Verbosity::kDebug) std::cerr << msg << "\n";
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// Writes `path` through a .tmp sibling that is renamed once flushed.
void write_text_atomically(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void announce(const RunConfig& config) {
  std::cout << "config_hash " << config.hash() << "\n";
  debug(config.to_text());
}

RunConfig build_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  RunConfig c = synthetic_preset();
  if (!config_path.empty()) c.merge_text(RunConfig::from_file(config_path).to_text(false));
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return c;
}

// Calls fn with the checkpoint loaded at its stored precision.
template <typename Fn>
void with_checkpoint(const fs::path& dir, Fn&& fn) {
  if (checkpoint_dtype(dir) == "float32-le") {
    auto ck = load_checkpoint<float>(dir);
    fn(ck);
  } else {
    auto ck = load_checkpoint<double>(dir);
    fn(ck);
  }
}

template <typename T>
void check_compatible(const ZslDataset& ds, const ModelParams<T>& p) {
  auto mismatch = [](const std::string& tensor, std::size_t have, std::size_t want) {
    return DimensionError("checkpoint tensor " + tensor + " expects " + std::to_string(want) +
                          ", dataset provides " + std::to_string(have));
  };
  if (ds.classes.num_attributes != p.num_attributes)
    throw mismatch("projection (attributes)", ds.classes.num_attributes, p.num_attributes);
  if (ds.word_dim != p.encoder.word_dim)
    throw mismatch("word_encoder.hidden_weight (word dim)", ds.word_dim, p.encoder.word_dim);
  if (ds.image_height != p.encoder.input_height || ds.image_width != p.encoder.input_width)
    throw mismatch("image_encoder.stage0.kernel (image size)", ds.image_height, p.encoder.input_height);
  if (ds.image_channels != p.encoder.input_channels)
    throw mismatch("image_encoder.stage0.kernel (channels)", ds.image_channels, p.encoder.input_channels);
}

// ---- gen-data -------------------------------------------------------------

struct GenArgs {
  std::string config, out;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  bool force = false;
};

int cmd_gen_data(const GenArgs& a) {
  RunConfig c = build_config(a.config, a.overrides);
  if (a.seed >= 0) c.gen.seed = static_cast<std::uint64_t>(a.seed);
  c.gen.validate();
  announce(c);
  const fs::path out(a.out);
  if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out)) && !a.force)
    throw UsageError(out.string() + " exists and is not empty; pass --force to replace it");
  const auto ds = generate_synthetic(c.gen);
  save_dataset(out, ds);
  std::cout << "classes " << ds.classes.num_classes << " (seen " << ds.classes.seen.size()
            << ", unseen " << ds.classes.unseen.size() << ")\n"
            << "attributes " << ds.classes.num_attributes << "\n"
            << "images " << ds.num_images() << " (train " << ds.train_indices.size() << ", test "
            << ds.test_indices.size() << ")\n"
            << "gaze_channels " << ds.gaze_channels << "\n";
  return kOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  bool gaze = false;
};

template <typename T>
void run_training(const ZslDataset& ds, const RunConfig& c, const fs::path& out) {
  std::string csv = "epoch,total,cls,dis,mse,gaze,sigma,val_t1\n";
  const Validator<T> validator = [&](const ModelParams<T>& p) {
    return *evaluate(ds, p, EvalMode::kZsl, 0.0, false).t1;
  };
  const auto on_epoch = [&](const EpochLog& e) {
    std::ostringstream row;
    row.precision(10);
    row << e.epoch << "," << e.total << "," << e.cls << "," << e.dis << "," << e.mse << ","
        << e.gaze << "," << e.sigma << "," << e.validation_t1.value_or(0.0) << "\n";
    csv += row.str();
    info("epoch " + std::to_string(e.epoch) + " loss " + fmt("%.4f", e.total) + " (cls " +
         fmt("%.4f", e.cls) + ", dis " + fmt("%.4f", e.dis) + ", mse " + fmt("%.4f", e.mse) +
         ", gaze " + fmt("%.4f", e.gaze) + ") val_t1 " + fmt("%.3f", e.validation_t1.value_or(0.0)));
  };
  const auto result = train<T>(ds, c.encoder, c.train, validator, on_epoch);
  save_checkpoint(out, result.params, c, c.train.epochs);
  write_text_atomically(out / "train_log.csv", csv);
}

int cmd_train(const TrainArgs& a) {
  RunConfig c = build_config(a.config, a.overrides);
  if (a.seed >= 0) c.train.seed = static_cast<std::uint64_t>(a.seed);
  if (a.gaze) c.train.use_gaze = true;
  c.encoder.validate();
  c.train.validate();
  const auto ds = load_dataset(a.data);
  if (c.train.use_gaze && !ds.has_gaze()) {
    throw DataError("--gaze needs gaze ground truth, and " + a.data +
                    " has none (lambda3 = 0 when gaze ground truth is not available)");
  }
  announce(c);
  std::cout << "resolved lambda3 " << c.train.effective_lambda3() << "\n";
  if (c.train.precision == Precision::kF32) {
    run_training<float>(ds, c, a.out);
  } else {
    run_training<double>(ds, c, a.out);
  }
  std::cout << "checkpoint " << a.out << "\n";
  return kOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string data, ckpt, mode = "zsl", sweep, out;
  double gamma = -1.0;
};

std::vector<double> parse_sweep(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(detail::parse_double("--gamma-sweep", item));
  if (parts.size() != 3 || parts[2] <= 0.0 || parts[1] < parts[0] || parts[0] < 0.0)
    throw ConfigError("--gamma-sweep expects lo:hi:step with 0 <= lo <= hi and step > 0");
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
  return out;
}

std::string pct(const std::optional<double>& v) { return v ? fmt("%.2f", 100.0 * *v) : ""; }

int cmd_eval(const EvalArgs& a) {
  if (a.mode != "zsl" && a.mode != "gzsl") throw ConfigError("--mode must be zsl or gzsl");
  const EvalMode mode = a.mode == "zsl" ? EvalMode::kZsl : EvalMode::kGzsl;
  const auto ds = load_dataset(a.data);
  std::string csv = "mode,gamma,t1,seen,unseen,harmonic,predicted_seen,samples\n";
  with_checkpoint(a.ckpt, [&](auto& ck) {
    announce(ck.config);
    check_compatible(ds, ck.params);
    std::vector<double> gammas;
    if (mode == EvalMode::kZsl) {
      if (a.gamma >= 0.0 || !a.sweep.empty())
        std::cerr << "warning: zsl mode ranks unseen classes only; gamma is ignored\n";
      gammas = {0.0};
    } else if (!a.sweep.empty()) {
      gammas = parse_sweep(a.sweep);
    } else {
      gammas = {a.gamma >= 0.0 ? a.gamma : ck.config.train.gamma};
    }
    const auto indices = mode == EvalMode::kZsl ? ds.test_indices_of(false) : ds.test_indices;
    const auto emb = compute_embeddings(ds, ck.params, indices, false);
    const auto proj = projection_values(ck.params);
    const double sigma = static_cast<double>(ck.params.sigma.item());
    for (double g : gammas) {
      const auto r = evaluate_embeddings(ds, proj, emb, mode, sigma, g);
      csv += std::string(mode_name(mode)) + "," + fmt("%.6g", r.gamma) + "," + pct(r.t1) + "," +
             pct(r.seen_accuracy) + "," + pct(r.unseen_accuracy) + "," + pct(r.harmonic) + "," +
             std::to_string(r.predicted_seen) + "," + std::to_string(r.seen_samples + r.unseen_samples) + "\n";
    }
  });
  std::cout << csv;
  if (!a.out.empty()) write_text_atomically(a.out, csv);
  return kOk;
}

// ---- gaze-eval ------------------------------------------------------------

struct GazeArgs {
  std::string data, ckpt, out;
};

int cmd_gaze_eval(const GazeArgs& a) {
  const auto ds = load_dataset(a.data);
  if (!ds.has_gaze())
    throw DataError(a.data + " has no fixations; regenerate it with gen.gaze_channels > 0");
  std::ostringstream json;
  with_checkpoint(a.ckpt, [&](auto& ck) {
    announce(ck.config);
    check_compatible(ds, ck.params);
    if (ck.params.gaze_channels != ds.gaze_channels) {
      throw DimensionError("checkpoint tensor transition.weight has " +
                           std::to_string(ck.params.gaze_channels) + " gaze channels, dataset has " +
                           std::to_string(ds.gaze_channels));
    }
    MetricsReport report;
    add_gaze_metrics(ds, compute_embeddings(ds, ck.params, ds.test_indices_of(false), true), report);
    if (!report.auc) throw DataError("no unseen test image carries fixations");
    json.precision(6);
    json << "{\n  \"auc\": " << *report.auc << ",\n  \"nss\": " << *report.nss
         << ",\n  \"channels\": [";
    for (std::size_t d = 0; d < report.gaze_per_channel.size(); ++d) {
      const auto& ch = report.gaze_per_channel[d];
      json << (d ? ", " : "") << "{\"channel\": " << d << ", \"auc\": " << ch.auc
           << ", \"nss\": " << ch.nss << ", \"images\": " << ch.count << "}";
    }
    json << "]\n}\n";
  });
  std::cout << json.str();
  if (!a.out.empty()) write_text_atomically(a.out, json.str());
  return kOk;
}

// ---- viz ------------------------------------------------------------------

struct VizArgs {
  std::string data, ckpt, out;
  std::size_t image = 0;
  std::size_t scale = 1;
};

// Channel c of an H x W x C map as an 8-bit binary graymap, min-max scaled,
// each cell drawn as a scale x scale block. A constant map renders black.
std::string to_pgm(std::span<const double> map, std::size_t h, std::size_t w, std::size_t channels,
                   std::size_t c, std::size_t scale) {
  double lo = map[c], hi = map[c];
  for (std::size_t p = 0; p < h * w; ++p) {
    lo = std::min(lo, map[p * channels + c]);
    hi = std::max(hi, map[p * channels + c]);
  }
  std::string out = "P5\n" + std::to_string(w * scale) + " " + std::to_string(h * scale) + "\n255\n";
  for (std::size_t y = 0; y < h * scale; ++y) {
    for (std::size_t x = 0; x < w * scale; ++x) {
      const double v = map[((y / scale) * w + x / scale) * channels + c];
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
    }
  }
  return out;
}

int cmd_viz(const VizArgs& a) {
  const auto ds = load_dataset(a.data);
  if (a.image >= ds.num_images())
    throw UsageError("--image " + std::to_string(a.image) + " out of range (dataset has " +
                     std::to_string(ds.num_images()) + " images)");
  if (a.scale == 0) throw ConfigError("--scale must be positive");
  with_checkpoint(a.ckpt, [&](auto& ck) {
    using T = std::decay_t<decltype(ck.params.sigma.item())>;
    announce(ck.config);
    check_compatible(ds, ck.params);
    NoGradGuard no_grad;
    const auto fw = forward(ck.params, ds.image_tensor<T>(a.image),
                            encode_words(ds.word_tensor<T>(), ck.params.words), true);
    const std::size_t h = fw.attention.shape()[0], w = fw.attention.shape()[1];
    const std::size_t k = ck.params.num_attributes, d = ck.params.gaze_channels;
    const std::vector<double> att(fw.attention.values().begin(), fw.attention.values().end());
    const std::vector<double> gaze(fw.gaze.values().begin(), fw.gaze.values().end());
    std::string csv = "attribute,name,score,class_value\n";
    char buf[64];
    for (std::size_t i = 0; i < k; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(fw.attribute_scores[i]));
      csv += std::to_string(i) + "," + ds.attribute_names[i] + "," + buf + "," +
             detail::format_double(ds.classes.phi[ds.labels[a.image] * k + i]) + "\n";
    }
    const fs::path out(a.out);
    io_detail::write_directory_atomically(out, [&](const fs::path& tmp) {
      for (std::size_t i = 0; i < k; ++i)
        io_detail::write_file(tmp / ("attention_" + std::to_string(i) + ".pgm"), to_pgm(att, h, w, k, i, a.scale));
      for (std::size_t i = 0; i < d; ++i)
        io_detail::write_file(tmp / ("gaze_" + std::to_string(i) + ".pgm"), to_pgm(gaze, h, w, d, i, a.scale));
      io_detail::write_file(tmp / "attributes.csv", csv);
    });
    std::cout << "wrote " << k << " attention maps, " << d << " gaze maps and attributes.csv to "
              << out.string() << "\n";
  });
  return kOk;
}

// ---- gradcheck ------------------------------------------------------------

struct GradArgs {
  double inject_fault = 0.0;
  std::uint64_t seed = 7;
};

int cmd_gradcheck(const GradArgs& a) {
  GradSuiteOptions o;
  o.inject_fault = a.inject_fault;
  o.seed = a.seed;
  bool ok = true;
  std::printf("%-10s %-12s %-8s %-8s %s\n", "loss", "max_rel_err", "checked", "excluded", "result");
  for (const auto& row : run_grad_suite(o)) {
    std::printf("%-10s %-12.3e %-8zu %-8zu %s\n", row.name.c_str(), row.report.max_rel_error,
                row.report.checked, row.report.excluded, row.passed ? "PASS" : "FAIL");
    ok = ok && row.passed;
  }
  return ok ? kOk : kNumericalFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze-embedding zero-shot learning on synthetic attribute data"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  g->add_option("--config", gen.config, "Configuration document");
  g->add_option("--set", gen.overrides, "Override one key (key=value), repeatable");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Overrides gen.seed");
  g->add_flag("--force", gen.force, "Replace a non-empty output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint directory");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "Configuration document");
  t->add_option("--set", tr.overrides, "Override one key (key=value), repeatable");
  t->add_option("--out", tr.out, "Checkpoint directory")->required();
  t->add_option("--seed", tr.seed, "Overrides train.seed");
  t->add_flag("--gaze", tr.gaze, "Enable the gaze loss (needs gaze ground truth)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Top-1 (zsl) or seen/unseen/harmonic (gzsl) accuracy");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required();
  e->add_option("--mode", ev.mode, "zsl or gzsl");
  e->add_option("--gamma", ev.gamma, "Calibration shift (gzsl); defaults to train.gamma");
  e->add_option("--gamma-sweep", ev.sweep, "lo:hi:step, one row per gamma (gzsl)");
  e->add_option("--out", ev.out, "Also write the CSV here");

  GazeArgs gz;
  auto* z = app.add_subcommand("gaze-eval", "AUC and NSS of predicted gaze on unseen test images");
  z->add_option("--data", gz.data, "Dataset directory")->required();
  z->add_option("--ckpt", gz.ckpt, "Checkpoint directory")->required();
  z->add_option("--out", gz.out, "Also write the JSON report here");

  VizArgs vz;
  auto* v = app.add_subcommand("viz", "Write attention and gaze maps of one image as PGM files");
  v->add_option("--data", vz.data, "Dataset directory")->required();
  v->add_option("--ckpt", vz.ckpt, "Checkpoint directory")->required();
  v->add_option("--image", vz.image, "Dataset image index")->required();
  v->add_option("--out", vz.out, "Output directory")->required();
  v->add_option("--scale", vz.scale, "Pixels per map cell");

  GradArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of every loss term");
  c->add_option("--inject-fault", gc.inject_fault, "Corrupt one analytic gradient by this relative amount");
  c->add_option("--seed", gc.seed, "Fixture seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfigFailure;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*z) return cmd_gaze_eval(gz);
    if (*v) return cmd_viz(vz);
    if (*c) return cmd_gradcheck(gc);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfigFailure;
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kConfigFailure;
  } catch (const GenerationError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfigFailure;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kDataFailure;
  } catch (const DimensionError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kDataFailure;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << "\n";
    return kNumericalFailure;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kDataFailure;
  }
  return kOk;
}
