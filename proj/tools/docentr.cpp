#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "docentr/data_io.hpp"
#include "docentr/error.hpp"
#include "docentr/metrics.hpp"
#include "docentr/model.hpp"
#include "docentr/patching.hpp"
#include "docentr/pipeline.hpp"
#include "docentr/training.hpp"

namespace fs = std::filesystem;
using namespace docentr;

namespace {

enum Exit { kOk = 0, kUserError = 1, kRuntimeFault = 2 };

// Raised for bad flag combinations detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainArgs {
  fs::path data;
  std::string variant = "base";
  std::size_t patch = 16;
  std::size_t window = 256;
  std::size_t layers = 0, dim = 0, heads = 0;
  std::size_t steps = 1000;
  std::size_t batch = 8;
  double lr = 1.5e-4;
  double weight_decay = 0.05;
  std::uint64_t seed = 0;
  std::size_t stride = 0;
  std::size_t stop_at = 0;
  std::size_t checkpoint_every = 0;
  fs::path out;
  fs::path resume;
  fs::path log;
};

model::ModelConfig train_model_config(const TrainArgs& a) {
  model::ModelConfig cfg;
  if (a.variant == "custom") {
    if (a.layers == 0 || a.dim == 0 || a.heads == 0)
      throw UsageError("--variant custom needs --layers, --dim and --heads");
    cfg.layers = a.layers;
    cfg.dim = a.dim;
    cfg.heads = a.heads;
    cfg.patch_size = a.patch;
    cfg.window_size = a.window;
  } else {
    if (a.layers || a.dim || a.heads) throw UsageError("--layers/--dim/--heads only apply to --variant custom");
    cfg = model::variant(a.variant, a.patch, a.window);
  }
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  training::Checkpoint state;
  if (!a.resume.empty()) {
    state = training::load_checkpoint(a.resume);
  } else {
    training::TrainConfig tc = training::TrainConfig::with_steps(a.steps);
    tc.base_lr = a.lr;
    tc.weight_decay = a.weight_decay;
    tc.batch_size = a.batch;
    tc.seed = a.seed;
    tc.validate();
    state = training::start_training(model::init_model(train_model_config(a), a.seed), tc);
  }
  const auto& cfg = state.weights.config;

  const auto manifest = data_io::open_dataset(a.data);
  const auto pairs = data_io::build_window_dataset(manifest, cfg.window_size, a.stride);
  if (pairs.empty()) throw UsageError("dataset " + a.data.string() + " contains no image pairs");

  const std::size_t first = state.step + 1;
  training::TrainOptions opts;
  opts.stop_at = a.stop_at;
  opts.checkpoint_every = a.checkpoint_every;
  opts.checkpoint_path = a.out;
  opts.on_step = [total = state.train.total_steps](std::size_t step, double loss) {
    if (step == 1 || step % 100 == 0 || step == total) std::fprintf(stderr, "step %zu/%zu loss %.6f\n", step, total, loss);
  };
  std::fprintf(stderr, "%zu windows of %zux%zu, %zu parameters\n", pairs.size(), cfg.window_size, cfg.window_size,
               model::param_count(cfg));
  const auto result = training::train(std::move(state), pairs, opts);
  training::save_checkpoint(a.out, result.checkpoint);
  const fs::path log = a.log.empty() ? fs::path(a.out.string() + ".loss.tsv") : a.log;
  training::write_loss_log(log, result.losses, first, !a.resume.empty());
  std::printf("wrote %s at step %zu\n", a.out.string().c_str(), result.checkpoint.step);
  return kOk;
}

struct BinarizeArgs {
  fs::path ckpt, in, out;
  double threshold = 0.5;
  bool no_threshold = false;
  std::size_t stride = 0;
};

int cmd_binarize(const BinarizeArgs& a) {
  const auto ckpt = training::load_checkpoint(a.ckpt);
  const ImageBuffer page = data_io::load_image(a.in);
  const ImageBuffer gray = pipeline::enhance(page, ckpt.weights, a.stride);
  if (a.no_threshold)
    data_io::save_image(a.out, gray);
  else
    data_io::save_image(a.out, metrics::binarize(gray, a.threshold));
  return kOk;
}

struct EvaluateArgs {
  fs::path pred, gt, report;
  double threshold = 0.5;
};

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext != ".pgm" && ext != ".ppm" && ext != ".pnm") continue;
    if (!out.emplace(e.path().stem().string(), e.path()).second)
      throw FormatError("two images share the stem " + e.path().stem().string() + " in " + dir.string());
  }
  return out;
}

int cmd_evaluate(const EvaluateArgs& a) {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(a.pred) != fs::is_directory(a.gt))
    throw UsageError("--pred and --gt must both be directories or both be files");
  if (fs::is_directory(a.gt)) {
    const auto preds = images_by_stem(a.pred), gts = images_by_stem(a.gt);
    for (const auto& [stem, g] : gts) {
      const auto it = preds.find(stem);
      if (it == preds.end()) throw FormatError("no prediction for ground truth " + g.string());
      pairs.emplace_back(it->second, g);
    }
    for (const auto& [stem, p] : preds)
      if (!gts.contains(stem)) throw FormatError("no ground truth for prediction " + p.string());
    if (pairs.empty()) throw UsageError("no images in " + a.gt.string());
  } else {
    pairs.emplace_back(a.pred, a.gt);
  }

  std::vector<metrics::MetricsReport> reports;
  for (const auto& [p, g] : pairs) {
    auto r = metrics::evaluate_pair(data_io::load_image(p), data_io::to_binary_gt(data_io::load_image(g)),
                                    a.threshold);
    r.name = g.stem().string();
    reports.push_back(std::move(r));
  }
  metrics::write_report(std::cout, reports);
  if (!a.report.empty()) {
    std::ofstream out(a.report);
    if (!out) throw std::runtime_error("cannot write " + a.report.string());
    metrics::write_report(out, reports);
  }
  return kOk;
}

struct AttentionArgs {
  fs::path ckpt, in, out;
  std::string tokens = "random:4";
  int layer = -1;
  std::size_t head = 1;
  std::size_t window_index = 0;
  std::uint64_t seed = 0;
};

std::vector<std::size_t> parse_tokens(const std::string& spec, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> out;
  if (spec.starts_with("random:")) {
    std::size_t k = 0;
    try {
      k = std::stoul(spec.substr(7));
    } catch (const std::exception&) {
      throw UsageError("bad token count in '" + spec + "'");
    }
    if (k == 0 || k > n) throw UsageError("random:K needs 1 <= K <= " + std::to_string(n));
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    std::mt19937_64 rng(seed);
    std::sample(all.begin(), all.end(), std::back_inserter(out), static_cast<std::ptrdiff_t>(k), rng);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t idx = 0;
    try {
      std::size_t used = 0;
      idx = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad token index '" + item + "'");
    }
    if (idx >= n) throw UsageError("token " + std::to_string(idx) + " out of range (window has " + std::to_string(n) + " tokens)");
    out.push_back(idx);
  }
  if (out.empty()) throw UsageError("no tokens given");
  return out;
}

int cmd_attention(const AttentionArgs& a) {
  const auto ckpt = training::load_checkpoint(a.ckpt);
  const auto& cfg = ckpt.weights.config;
  const std::size_t layer = a.layer < 0 ? model::default_attention_layer(cfg) : static_cast<std::size_t>(a.layer);
  if (layer >= cfg.layers) throw UsageError("layer " + std::to_string(layer) + " out of range");
  if (a.head >= cfg.heads) throw UsageError("head " + std::to_string(a.head) + " out of range");

  const ImageBuffer page = data_io::load_image(a.in);
  auto [padded, grid] = patching::pad_to_grid(page, cfg.window_size, 0);
  const auto windows = patching::extract_windows(padded, grid);
  if (a.window_index >= windows.size()) throw UsageError("window index out of range");

  const auto tokens = parse_tokens(a.tokens, cfg.tokens(), a.seed);
  const auto maps = model::attention_maps(windows[a.window_index], ckpt.weights, layer, a.head, tokens);
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "tok%zu_L%zu_H%zu.pgm", tokens[i], layer, a.head);
    data_io::save_image(a.out / name, maps[i]);
    std::printf("%s\n", (a.out / name).string().c_str());
  }
  return kOk;
}

struct SynthArgs {
  fs::path out;
  std::size_t count = 16;
  std::string size = "64x64";
  data_io::SynthSpec spec;
};

int cmd_synth(SynthArgs a) {
  const auto x = a.size.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(a.size);
    a.spec.height = std::stoul(a.size.substr(0, x));
    a.spec.width = std::stoul(a.size.substr(x + 1));
  } catch (const std::exception&) {
    throw UsageError("--size must look like HxW, got '" + a.size + "'");
  }
  const auto m = data_io::write_synthetic_dataset(a.out, a.count, a.spec);
  std::printf("wrote %zu pairs to %s\n", m.pairs.size(), a.out.string().c_str());
  return kOk;
}

void print_counts(const model::ModelConfig& c) {
  const auto v = model::matching_variant(c);
  std::printf("computed parameters: %zu (%.1fM)\n", model::param_count(c), static_cast<double>(model::param_count(c)) / 1e6);
  std::printf("published nominal: %s\n", v ? std::string(model::nominal_parameters(*v)).c_str() : "n/a");
}

void print_config(const model::ModelConfig& c) {
  const auto v = model::matching_variant(c);
  std::printf("variant: %s\n", v ? std::string(model::variant_name(*v)).c_str() : "custom");
  std::printf("layers: %zu\ndim: %zu\nheads: %zu\npatch: %zu\nwindow: %zu\ntokens: %zu\n", c.layers, c.dim, c.heads,
              c.patch_size, c.window_size, c.tokens());
}

struct InfoArgs {
  fs::path ckpt;
  std::string variant;
  std::size_t patch = 16;
  std::size_t window = 256;
};

int cmd_info(const InfoArgs& a) {
  if (a.ckpt.empty() == a.variant.empty()) throw UsageError("info needs exactly one of --ckpt and --variant");
  if (!a.variant.empty()) {
    const auto c = model::variant(a.variant, a.patch, a.window);
    c.validate();
    print_config(c);
    print_counts(c);
    return kOk;
  }
  const auto ckpt = training::load_checkpoint(a.ckpt);
  const auto& t = ckpt.train;
  print_config(ckpt.weights.config);
  std::printf("step: %zu/%zu\nbase_lr: %g\nbatch: %zu\nseed: %llu\n", ckpt.step, t.total_steps, t.base_lr,
              t.batch_size, static_cast<unsigned long long>(t.seed));
  print_counts(ckpt.weights.config);
  return kOk;
}

// Splices the key=value lines of a --config file in front of the
// subcommand's own flags. Options keep their last value, so flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> out;
  fs::path config;
  std::size_t insert_at = std::min<std::size_t>(1, args.size());
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].starts_with("--config=")) {
      config = args[i].substr(9);
    } else {
      out.push_back(args[i]);
    }
  }
  if (config.empty()) return out;
  std::ifstream in(config);
  if (!in) throw UsageError("cannot read config file " + config.string());
  std::vector<std::string> extra;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(config.string() + ":" + std::to_string(n) + ": expected key=value");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r"), e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    while (key.starts_with('-')) key.erase(0, 1);
    extra.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(insert_at), extra.begin(), extra.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Document image enhancement with a transformer auto-encoder"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model on degraded/gt pairs");
  train->add_option("--config", "key=value file with defaults for these flags");
  train->add_option("--data", ta.data, "Dataset directory (degraded/, gt/) or manifest file")->required();
  train->add_option("--variant", ta.variant, "small, base, large or custom")
      ->check(CLI::IsMember({"small", "base", "large", "custom"}, CLI::ignore_case));
  train->add_option("--patch", ta.patch, "Patch side in pixels");
  train->add_option("--window", ta.window, "Window side in pixels");
  train->add_option("--layers", ta.layers, "Blocks per stack (custom variant)");
  train->add_option("--dim", ta.dim, "Embedding width (custom variant)");
  train->add_option("--heads", ta.heads, "Attention heads (custom variant)");
  train->add_option("--steps", ta.steps, "Schedule length")->check(CLI::PositiveNumber);
  train->add_option("--batch", ta.batch, "Windows per step")->check(CLI::PositiveNumber);
  train->add_option("--lr", ta.lr, "Peak learning rate")->check(CLI::PositiveNumber);
  train->add_option("--weight-decay", ta.weight_decay, "AdamW decoupled weight decay")->check(CLI::NonNegativeNumber);
  train->add_option("--seed", ta.seed, "Initialization and shuffling seed");
  train->add_option("--stride", ta.stride, "Window stride when cutting pages (0 = half a window)");
  train->add_option("--stop-at", ta.stop_at, "Stop after this step without shortening the schedule (0 = run to the end)");
  train->add_option("--checkpoint-every", ta.checkpoint_every, "Also save to --out every N steps (0 = only at the end)");
  train->add_option("--out", ta.out, "Checkpoint to write")->required();
  train->add_option("--resume", ta.resume, "Continue from this checkpoint; its model and schedule are kept");
  train->add_option("--log", ta.log, "Loss log path (default: <out>.loss.tsv)");

  BinarizeArgs ba;
  auto* bin = app.add_subcommand("binarize", "Enhance a page and threshold it");
  bin->add_option("--config", "key=value file with defaults for these flags");
  bin->add_option("--ckpt", ba.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  bin->add_option("--in", ba.in, "Input image (PGM/PPM)")->required()->check(CLI::ExistingFile);
  bin->add_option("--out", ba.out, "Output image")->required();
  bin->add_option("--threshold", ba.threshold, "Ink threshold on the enhanced output")->check(CLI::Range(0.0, 1.0));
  bin->add_flag("--no-threshold", ba.no_threshold, "Write the continuous grayscale output");
  bin->add_option("--stride", ba.stride, "Window stride (0 = half a window)");

  EvaluateArgs ea;
  auto* eval = app.add_subcommand("evaluate", "Score predictions against ground truth");
  eval->add_option("--config", "key=value file with defaults for these flags");
  eval->add_option("--pred", ea.pred, "Prediction image or directory")->required()->check(CLI::ExistingPath);
  eval->add_option("--gt", ea.gt, "Ground-truth image or directory")->required()->check(CLI::ExistingPath);
  eval->add_option("--report", ea.report, "Also write the report here");
  eval->add_option("--threshold", ea.threshold, "Ink threshold for grayscale predictions")->check(CLI::Range(0.0, 1.0));

  AttentionArgs aa;
  auto* att = app.add_subcommand("attention", "Write encoder attention maps for query tokens");
  att->add_option("--config", "key=value file with defaults for these flags");
  att->add_option("--ckpt", aa.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  att->add_option("--in", aa.in, "Input image")->required()->check(CLI::ExistingFile);
  att->add_option("--tokens", aa.tokens, "Comma-separated token indices or random:K");
  att->add_option("--layer", aa.layer, "Encoder layer, 0-based (-1 = last)");
  att->add_option("--head", aa.head, "Head, 0-based");
  att->add_option("--window-index", aa.window_index, "Which window of the page to inspect");
  att->add_option("--seed", aa.seed, "Seed for random:K");
  att->add_option("--out", aa.out, "Output directory")->required();

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "Generate synthetic degraded/gt pairs");
  syn->add_option("--config", "key=value file with defaults for these flags");
  syn->add_option("--out", sa.out, "Output directory")->required();
  syn->add_option("--count", sa.count, "Number of pairs")->check(CLI::PositiveNumber);
  syn->add_option("--size", sa.size, "Canvas size HxW");
  syn->add_option("--seed", sa.spec.seed, "Seed of the first pair; pair i uses seed+i");
  syn->add_option("--density", sa.spec.stroke_density, "Stroke density");
  syn->add_option("--stain", sa.spec.stain, "Background stain amplitude");
  syn->add_option("--saltpepper", sa.spec.salt_pepper, "Salt-and-pepper rate");
  syn->add_option("--blur", sa.spec.blur, "Gaussian blur sigma in pixels");
  syn->add_option("--bleed", sa.spec.bleed, "Bleed-through opacity");

  InfoArgs ia;
  auto* info = app.add_subcommand("info", "Print a checkpoint's or preset's configuration and parameter counts");
  info->add_option("--ckpt", ia.ckpt, "Checkpoint")->check(CLI::ExistingFile);
  info->add_option("--variant", ia.variant, "Describe a preset instead of a checkpoint")
      ->check(CLI::IsMember({"small", "base", "large"}, CLI::ignore_case));
  info->add_option("--patch", ia.patch, "Patch side for --variant");
  info->add_option("--window", ia.window, "Window side for --variant");

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUserError;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*bin) return cmd_binarize(ba);
    if (*eval) return cmd_evaluate(ea);
    if (*att) return cmd_attention(aa);
    if (*syn) return cmd_synth(sa);
    if (*info) return cmd_info(ia);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fault: %s\n", e.what());
    return kRuntimeFault;
  }
  return kUserError;
}
