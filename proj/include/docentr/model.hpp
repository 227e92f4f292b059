#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docentr/image.hpp"
#include "docentr/numerics/graph.hpp"
#include "docentr/numerics/tensor.hpp"
#include "docentr/patching.hpp"

namespace docentr::model {

enum class Variant { Small, Base, Large };

enum class OutputHead {
  Linear,   // raw projection, clamped to [0,1] at inference
  Sigmoid,  // squashed projection, used for experimentation
};

struct ModelConfig {
  std::size_t layers = 12;  // per stack; encoder and decoder each have this many blocks
  std::size_t dim = 768;
  std::size_t heads = 8;
  std::size_t patch_size = 16;
  std::size_t window_size = 256;
  std::size_t in_channels = 3;
  std::size_t out_channels = 1;
  std::size_t mlp_ratio = 4;
  double eps = 1e-6;
  OutputHead head = OutputHead::Linear;

  std::size_t tokens() const noexcept {
    const std::size_t g = window_size / patch_size;
    return g * g;
  }
  std::size_t grid_side() const noexcept { return window_size / patch_size; }
  std::size_t token_in() const noexcept { return patch_size * patch_size * in_channels; }
  std::size_t token_out() const noexcept { return patch_size * patch_size * out_channels; }
  std::size_t head_dim() const noexcept { return dim / heads; }
  std::size_t hidden() const noexcept { return dim * mlp_ratio; }

  /// Throws ContractError when an invariant is broken.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::optional<Variant> parse_variant(std::string_view name);
std::string_view variant_name(Variant v);
/// Published nominal parameter count for the preset ("17M", "68M", "255M").
std::string_view nominal_parameters(Variant v);

/// Preset depth/width/heads with the caller's patch and window size.
ModelConfig variant(Variant v, std::size_t patch_size, std::size_t window_size);
/// Same, by name (case-insensitive "small", "base", "large").
ModelConfig variant(std::string_view name, std::size_t patch_size, std::size_t window_size);
/// Preset whose (layers, dim, heads) equals the config's, if any.
std::optional<Variant> matching_variant(const ModelConfig& cfg);

struct ParamSpec {
  std::string name;
  numerics::Shape shape;
};

/// Every weight tensor of the model, in storage order. Shapes are a pure
/// function of the config.
std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg);
std::size_t param_count(const ModelConfig& cfg);

/// Position of each tensor in the storage order of parameter_specs().
struct BlockSlots {
  std::size_t ln1_g, ln1_b, qkv_w, qkv_b, attn_out_w, attn_out_b, ln2_g, ln2_b, mlp1_w, mlp1_b, mlp2_w, mlp2_b;
};
struct ParamLayout {
  std::size_t embed_w, embed_b, pos_embed;
  std::vector<BlockSlots> encoder;
  std::size_t enc_norm_g, enc_norm_b;
  std::vector<BlockSlots> decoder;
  std::size_t dec_norm_g, dec_norm_b;
  std::size_t proj_w, proj_b;
};
ParamLayout parameter_layout(const ModelConfig& cfg);

template <typename T>
struct BasicModelWeights {
  ModelConfig config;
  std::vector<numerics::BasicParameter<T>> params;

  numerics::BasicParameter<T>& find(std::string_view name);
  const numerics::BasicParameter<T>& find(std::string_view name) const;
  std::size_t param_count() const;
  void zero_grads();

  template <typename U>
  BasicModelWeights<U> cast() const {
    BasicModelWeights<U> out{config, {}};
    out.params.reserve(params.size());
    for (const auto& p : params) out.params.emplace_back(p.name, p.value.template cast<U>());
    return out;
  }
};

using ModelWeights = BasicModelWeights<float>;

/// Truncated normal(0, 0.02) clipped at two standard deviations for matrices
/// and positional embeddings; zero biases; unit LayerNorm gains.
ModelWeights init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Weights with every tensor set to zero.
template <typename T>
BasicModelWeights<T> zero_model(const ModelConfig& cfg);

// Graph-level pieces. Inputs carry a leading batch dimension.

template <typename T>
struct BoundWeights {
  std::vector<numerics::Var> vars;  // one per parameter, storage order
  ParamLayout layout;
  numerics::Var operator[](std::size_t i) const { return vars[i]; }
};

template <typename T>
BoundWeights<T> bind(numerics::Graph<T>& g, BasicModelWeights<T>& w);

/// Which attention matrices to keep while running the encoder.
struct TraceRequest {
  bool enabled = false;
  std::optional<std::size_t> layer;  // all layers when empty
};

/// Softmax attention of one head for one window: rows are query tokens.
struct AttentionTrace {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t window = 0;  // index in the batch
  std::size_t grid_side = 0;
  std::size_t patch_size = 0;
  numerics::Tensor matrix;  // [N, N]
};

/// tokens [B, N, p*p*Cin] -> embeddings [B, N, D] (linear map + positions).
template <typename T>
numerics::Var embed(numerics::Graph<T>& g, numerics::Var tokens, const BoundWeights<T>& w, const ModelConfig& cfg);

/// Pre-norm transformer block; returns the block output and, through
/// `attention`, the softmax node when requested.
template <typename T>
numerics::Var block_forward(numerics::Graph<T>& g, numerics::Var x, const BoundWeights<T>& w, const BlockSlots& slots,
                            const ModelConfig& cfg, numerics::Var* attention = nullptr);

template <typename T>
numerics::Var encoder_forward(numerics::Graph<T>& g, numerics::Var x, const BoundWeights<T>& w, const ModelConfig& cfg,
                              const TraceRequest& trace = {}, std::vector<AttentionTrace>* traces = nullptr);

template <typename T>
numerics::Var decoder_forward(numerics::Graph<T>& g, numerics::Var latent, const BoundWeights<T>& w,
                              const ModelConfig& cfg);

/// [B, N, D] -> [B, N, p*p*Cout], unclamped.
template <typename T>
numerics::Var project_output(numerics::Graph<T>& g, numerics::Var decoded, const BoundWeights<T>& w,
                             const ModelConfig& cfg);

/// embed -> encoder -> decoder -> projection on a batch of token matrices.
template <typename T>
numerics::Var forward_tokens(numerics::Graph<T>& g, numerics::Var tokens, const BoundWeights<T>& w,
                             const ModelConfig& cfg, const TraceRequest& trace = {},
                             std::vector<AttentionTrace>* traces = nullptr);

/// Stacks the windows' token matrices into [B, N, p*p*Cin]; grayscale
/// windows are replicated to the configured channel count.
numerics::Tensor batch_tokens(std::span<const ImageBuffer> windows, const ModelConfig& cfg);

/// Enhanced S x S x 1 window with values clamped to [0,1].
ImageBuffer forward_window(const ImageBuffer& window, const ModelWeights& w);

/// forward_window over many windows, `batch` at a time. Output order matches input.
std::vector<ImageBuffer> forward_windows(std::span<const ImageBuffer> windows, const ModelWeights& w,
                                         std::size_t batch = 8);

/// Encoder attention matrices of a single window.
std::vector<AttentionTrace> encoder_attention(const ImageBuffer& window, const ModelWeights& w,
                                              std::optional<std::size_t> layer = std::nullopt);

/// One S x S map per query token: the token's attention row over the patch
/// grid, min-max normalized (constant rows become 0.5) and upsampled by
/// nearest neighbour.
std::vector<ImageBuffer> attention_maps(const ImageBuffer& window, const ModelWeights& w, std::size_t layer,
                                        std::size_t head, std::span<const std::size_t> query_tokens);

/// Renders an attention row [N] the same way attention_maps does.
ImageBuffer render_attention_row(std::span<const float> row, std::size_t grid_side, std::size_t patch_size);

/// Last layer, second head.
inline std::size_t default_attention_layer(const ModelConfig& cfg) { return cfg.layers - 1; }
inline constexpr std::size_t kDefaultAttentionHead = 1;

}  // namespace docentr::model
