#include "docentr/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "docentr/error.hpp"
#include "docentr/numerics/ops.hpp"

namespace docentr::training {

using numerics::Graph;
using numerics::Tensor;
using numerics::Var;

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("invalid training config: " + what); };
  if (!(base_lr > 0)) fail("base_lr must be positive");
  if (min_lr < 0 || min_lr > base_lr) fail("min_lr must lie in [0, base_lr]");
  if (weight_decay < 0) fail("weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0,1)");
  if (!(eps_opt > 0)) fail("eps_opt must be positive");
  if (warmup_steps > total_steps) fail("warmup_steps exceeds total_steps");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (grad_clip_norm < 0) fail("grad_clip_norm must be non-negative");
}

TrainConfig TrainConfig::with_steps(std::size_t steps) {
  TrainConfig c;
  c.total_steps = steps;
  c.warmup_steps = steps / 20;
  return c;
}

AdamState AdamState::zeros_like(std::span<const numerics::Parameter> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

double mse_loss_patches(const patching::PatchSequence& pred, const patching::PatchSequence& target) {
  if (pred.tokens.shape() != target.tokens.shape()) {
    throw DimensionError("mse: prediction " + numerics::to_string(pred.tokens.shape()) + " vs target " +
                         numerics::to_string(target.tokens.shape()));
  }
  double total = 0;
  for (std::size_t i = 0; i < pred.tokens.size(); ++i) {
    const double d = static_cast<double>(pred.tokens[i]) - static_cast<double>(target.tokens[i]);
    total += d * d;
  }
  return total / static_cast<double>(pred.tokens.size());
}

bool applies_weight_decay(std::string_view name) {
  return name.size() >= 2 && name.substr(name.size() - 2) == "_w";
}

void adamw_step(std::span<numerics::Parameter> params, AdamState& moments, std::size_t t, double lr,
                const TrainConfig& cfg) {
  if (t < 1) throw ContractError("adamw_step: step must be at least 1");
  if (moments.m.size() != params.size() || moments.v.size() != params.size()) {
    throw DimensionError("adamw_step: moment count does not match parameter count");
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = moments.m[i];
    auto& v = moments.v[i];
    if (m.shape() != p.value.shape() || v.shape() != p.value.shape()) {
      throw DimensionError("adamw_step: moment shape mismatch for " + p.name);
    }
    const double decay = applies_weight_decay(p.name) ? cfg.weight_decay : 0.0;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      const double theta = p.value[k];
      p.value[k] = static_cast<float>(theta - lr * mhat / (std::sqrt(vhat) + cfg.eps_opt) - lr * decay * theta);
    }
  }
}

double lr_at(std::size_t t, const TrainConfig& cfg) {
  if (t > cfg.total_steps) {
    throw ContractError("lr_at: step " + std::to_string(t) + " beyond schedule of " +
                        std::to_string(cfg.total_steps));
  }
  if (t < cfg.warmup_steps) return cfg.base_lr * static_cast<double>(t) / static_cast<double>(cfg.warmup_steps);
  if (cfg.total_steps == cfg.warmup_steps) return cfg.base_lr;
  const double progress =
      static_cast<double>(t - cfg.warmup_steps) / static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(std::span<numerics::Parameter> params, double max_norm) {
  double sq = 0;
  for (const auto& p : params)
    for (float g : p.grad.values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float f = static_cast<float>(max_norm / norm);
    for (auto& p : params)
      for (float& g : p.grad.values()) g *= f;
  }
  return norm;
}

std::vector<std::size_t> batch_indices(std::size_t step, std::size_t batch_size, std::size_t dataset_size,
                                       std::uint64_t seed) {
  if (dataset_size == 0) throw ContractError("empty dataset");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order(dataset_size);
  for (std::size_t j = 0; j < batch_size; ++j) {
    const std::size_t k = step * batch_size + j;
    const std::size_t epoch = k / dataset_size;
    if (epoch != cached_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
      std::mt19937_64 rng(seq);
      std::shuffle(order.begin(), order.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(order[k % dataset_size]);
  }
  return out;
}

Checkpoint start_training(model::ModelWeights weights, const TrainConfig& cfg) {
  cfg.validate();
  weights.config.validate();
  Checkpoint c{std::move(weights), cfg, 0, {}};
  c.moments = AdamState::zeros_like(c.weights.params);
  return c;
}

namespace {

struct EncodedPair {
  Tensor input;   // [N, p*p*Cin]
  Tensor target;  // [N, p*p*Cout]
};

std::vector<EncodedPair> encode(std::span<const WindowPair> data, const model::ModelConfig& cfg) {
  std::vector<EncodedPair> out;
  out.reserve(data.size());
  for (const auto& pair : data) {
    const auto& d = pair.degraded;
    const auto& c = pair.clean;
    if (d.height() != cfg.window_size || d.width() != cfg.window_size || c.height() != cfg.window_size ||
        c.width() != cfg.window_size) {
      throw DimensionError("training window does not match configured window size " +
                           std::to_string(cfg.window_size));
    }
    if (c.channels() != cfg.out_channels) {
      throw DimensionError("clean window has " + std::to_string(c.channels()) + " channels, model emits " +
                           std::to_string(cfg.out_channels));
    }
    out.push_back({patching::tokenize_window(d.replicate(cfg.in_channels), cfg.patch_size).tokens,
                   patching::tokenize_window(c, cfg.patch_size).tokens});
  }
  return out;
}

Tensor stack(const std::vector<EncodedPair>& data, std::span<const std::size_t> idx, bool target) {
  const Tensor& first = target ? data[idx[0]].target : data[idx[0]].input;
  const std::size_t n = first.dim(0), len = first.dim(1);
  Tensor out({idx.size(), n, len});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Tensor& t = target ? data[idx[b]].target : data[idx[b]].input;
    std::copy_n(t.data(), n * len, out.data() + b * n * len);
  }
  return out;
}

}  // namespace

TrainResult train(Checkpoint state, std::span<const WindowPair> data, const TrainOptions& options) {
  if (data.empty()) throw ContractError("training dataset is empty");
  const TrainConfig& cfg = state.train;
  cfg.validate();
  const model::ModelConfig& mcfg = state.weights.config;
  const auto encoded = encode(data, mcfg);
  const std::size_t stop = options.stop_at ? std::min(options.stop_at, cfg.total_steps) : cfg.total_steps;

  TrainResult result;
  auto& weights = state.weights;
  while (state.step < stop) {
    const std::size_t t = state.step + 1;
    const auto idx = batch_indices(state.step, cfg.batch_size, encoded.size(), cfg.seed);
    weights.zero_grads();
    double loss_value;
    {
      Graph<float> g;
      const auto bound = model::bind(g, weights);
      Var tokens = g.constant(stack(encoded, idx, false));
      Var pred = model::forward_tokens(g, tokens, bound, mcfg);
      Var loss = numerics::mse(g, pred, stack(encoded, idx, true));
      loss_value = g.value(loss).item();
      g.backward(loss);
    }
    if (cfg.grad_clip_norm > 0) clip_grad_norm(weights.params, cfg.grad_clip_norm);
    adamw_step(weights.params, state.moments, t, lr_at(t, cfg), cfg);
    state.step = t;
    result.losses.push_back(loss_value);
    if (options.on_step) options.on_step(t, loss_value);
    if (options.checkpoint_every && !options.checkpoint_path.empty() && t % options.checkpoint_every == 0) {
      save_checkpoint(options.checkpoint_path, state);
    }
  }
  result.checkpoint = std::move(state);
  return result;
}

double evaluate_loss(const model::ModelWeights& weights, std::span<const WindowPair> data, std::size_t batch) {
  if (data.empty()) throw ContractError("evaluation dataset is empty");
  double total = 0;
  std::size_t count = 0;
  std::vector<ImageBuffer> inputs;
  for (const auto& p : data) inputs.push_back(p.degraded);
  // forward_windows clamps, the loss here matches inference output
  const auto outputs = model::forward_windows(inputs, weights, batch);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& out = outputs[i].values();
    const auto& ref = data[i].clean.values();
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double d = static_cast<double>(out[k]) - ref[k];
      total += d * d;
    }
    count += out.size();
  }
  return total / static_cast<double>(count);
}

void write_loss_log(const std::filesystem::path& path, std::span<const double> losses, std::size_t first_step,
                    bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write loss log " + path.string());
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\n", first_step + i, losses[i]);
    out << buf;
  }
}

}  // namespace docentr::training
