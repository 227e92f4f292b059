#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "docentr/image.hpp"
#include "docentr/model.hpp"
#include "docentr/patching.hpp"

namespace docentr::training {

struct TrainConfig {
  double base_lr = 1.5e-4;
  double min_lr = 1e-6;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_opt = 1e-8;
  std::size_t warmup_steps = 50;
  std::size_t total_steps = 1000;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double grad_clip_norm = 1.0;  // 0 disables clipping

  void validate() const;
  /// Warmup set to 5% of `steps`.
  static TrainConfig with_steps(std::size_t steps);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// First and second Adam moments, one pair per model parameter.
struct AdamState {
  std::vector<numerics::Tensor> m;
  std::vector<numerics::Tensor> v;

  static AdamState zeros_like(std::span<const numerics::Parameter> params);
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  model::ModelWeights weights;
  TrainConfig train;
  std::size_t step = 0;
  AdamState moments;
};

/// A degraded window (model input) and its clean target (1 channel).
struct WindowPair {
  ImageBuffer degraded;
  ImageBuffer clean;
};

/// mean over every element of (pred - target)^2.
double mse_loss_patches(const patching::PatchSequence& pred, const patching::PatchSequence& target);

/// Whether AdamW applies decoupled weight decay to the named tensor. Biases,
/// LayerNorm parameters and positional embeddings are excluded.
bool applies_weight_decay(std::string_view name);

/// One AdamW update at step `t` (1-based) using the grads stored in `params`.
void adamw_step(std::span<numerics::Parameter> params, AdamState& moments, std::size_t t, double lr,
                const TrainConfig& cfg);

/// Linear warmup from 0 to base_lr, then half-cosine decay to min_lr at total_steps.
double lr_at(std::size_t t, const TrainConfig& cfg);

/// Scales all grads so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<numerics::Parameter> params, double max_norm);

/// Indices of the windows used at `step` (0-based). The order is a pure
/// function of (seed, step, dataset size): each epoch is a fresh seeded
/// permutation, so resuming needs no RNG state.
std::vector<std::size_t> batch_indices(std::size_t step, std::size_t batch_size, std::size_t dataset_size,
                                       std::uint64_t seed);

struct TrainOptions {
  /// Stop after this many total steps (defaults to the schedule length).
  std::size_t stop_at = 0;
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
  std::function<void(std::size_t step, double loss)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  // one per step run in this call
};

/// Fresh training state for a model.
Checkpoint start_training(model::ModelWeights weights, const TrainConfig& cfg);

/// Continues `state` (weights, moments, step) over `data`. Each step runs the
/// batch forward, MSE against the clean patch vectors, backward, optional
/// clipping and an AdamW update.
TrainResult train(Checkpoint state, std::span<const WindowPair> data, const TrainOptions& options = {});

/// Mean squared error of the clamped inference output on `data` (no update).
double evaluate_loss(const model::ModelWeights& weights, std::span<const WindowPair> data, std::size_t batch = 8);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes "step\tloss" lines; `first_step` is the 1-based step of losses[0].
void write_loss_log(const std::filesystem::path& path, std::span<const double> losses, std::size_t first_step,
                    bool append = false);

}  // namespace docentr::training
