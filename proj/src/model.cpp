#include "docentr/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <string>

#include "docentr/error.hpp"
#include "docentr/numerics/ops.hpp"

namespace docentr::model {

using numerics::Graph;
using numerics::Shape;
using numerics::Tensor;
using numerics::Var;

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("invalid model config: " + what); };
  if (layers < 1) fail("layers must be at least 1");
  if (dim == 0 || heads == 0 || dim % heads != 0) fail("dim " + std::to_string(dim) + " not divisible by heads");
  if (patch_size == 0 || window_size % patch_size != 0) {
    fail("window " + std::to_string(window_size) + " not divisible by patch " + std::to_string(patch_size));
  }
  if (window_size < 2 || window_size % 2 != 0) fail("window size must be even");
  if (in_channels != 1 && in_channels != 3) fail("in_channels must be 1 or 3");
  if (out_channels != 1 && out_channels != 3) fail("out_channels must be 1 or 3");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
  if (!(eps > 0)) fail("eps must be positive");
}

std::optional<Variant> parse_variant(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "small") return Variant::Small;
  if (lower == "base") return Variant::Base;
  if (lower == "large") return Variant::Large;
  return std::nullopt;
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Small: return "small";
    case Variant::Base: return "base";
    case Variant::Large: return "large";
  }
  return "?";
}

std::string_view nominal_parameters(Variant v) {
  switch (v) {
    case Variant::Small: return "17M";
    case Variant::Base: return "68M";
    case Variant::Large: return "255M";
  }
  return "?";
}

ModelConfig variant(Variant v, std::size_t patch_size, std::size_t window_size) {
  ModelConfig cfg;
  switch (v) {
    case Variant::Small: cfg.layers = 6, cfg.dim = 512, cfg.heads = 4; break;
    case Variant::Base: cfg.layers = 12, cfg.dim = 768, cfg.heads = 8; break;
    case Variant::Large: cfg.layers = 24, cfg.dim = 1024, cfg.heads = 16; break;
  }
  cfg.patch_size = patch_size;
  cfg.window_size = window_size;
  cfg.validate();
  return cfg;
}

ModelConfig variant(std::string_view name, std::size_t patch_size, std::size_t window_size) {
  auto v = parse_variant(name);
  if (!v) throw ContractError("unknown model variant '" + std::string(name) + "' (expected small, base or large)");
  return variant(*v, patch_size, window_size);
}

std::optional<Variant> matching_variant(const ModelConfig& cfg) {
  for (Variant v : {Variant::Small, Variant::Base, Variant::Large}) {
    const ModelConfig p = variant(v, cfg.patch_size, cfg.window_size);
    if (p.layers == cfg.layers && p.dim == cfg.dim && p.heads == cfg.heads) return v;
  }
  return std::nullopt;
}

namespace {

void append_block(std::vector<ParamSpec>& out, const std::string& prefix, const ModelConfig& cfg) {
  const std::size_t d = cfg.dim;
  const std::size_t h = cfg.hidden();
  out.push_back({prefix + "ln1_g", {d}});
  out.push_back({prefix + "ln1_b", {d}});
  out.push_back({prefix + "qkv_w", {d, 3 * d}});
  out.push_back({prefix + "qkv_b", {3 * d}});
  out.push_back({prefix + "attn_out_w", {d, d}});
  out.push_back({prefix + "attn_out_b", {d}});
  out.push_back({prefix + "ln2_g", {d}});
  out.push_back({prefix + "ln2_b", {d}});
  out.push_back({prefix + "mlp1_w", {d, h}});
  out.push_back({prefix + "mlp1_b", {h}});
  out.push_back({prefix + "mlp2_w", {h, d}});
  out.push_back({prefix + "mlp2_b", {d}});
}

constexpr std::size_t kBlockTensors = 12;

BlockSlots block_slots(std::size_t first) {
  std::size_t i = first;
  BlockSlots s{};
  s.ln1_g = i++, s.ln1_b = i++, s.qkv_w = i++, s.qkv_b = i++, s.attn_out_w = i++, s.attn_out_b = i++;
  s.ln2_g = i++, s.ln2_b = i++, s.mlp1_w = i++, s.mlp1_b = i++, s.mlp2_w = i++, s.mlp2_b = i++;
  return s;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  std::vector<ParamSpec> out;
  out.push_back({"embed_w", {cfg.token_in(), d}});
  out.push_back({"embed_b", {d}});
  out.push_back({"pos_embed", {cfg.tokens(), d}});
  for (std::size_t i = 0; i < cfg.layers; ++i) append_block(out, "enc." + std::to_string(i) + ".", cfg);
  out.push_back({"final_ln_enc_g", {d}});
  out.push_back({"final_ln_enc_b", {d}});
  for (std::size_t i = 0; i < cfg.layers; ++i) append_block(out, "dec." + std::to_string(i) + ".", cfg);
  out.push_back({"final_ln_dec_g", {d}});
  out.push_back({"final_ln_dec_b", {d}});
  out.push_back({"proj_w", {d, cfg.token_out()}});
  out.push_back({"proj_b", {cfg.token_out()}});
  return out;
}

std::size_t param_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& s : parameter_specs(cfg)) n += numerics::element_count(s.shape);
  return n;
}

ParamLayout parameter_layout(const ModelConfig& cfg) {
  ParamLayout l{};
  std::size_t i = 0;
  l.embed_w = i++, l.embed_b = i++, l.pos_embed = i++;
  for (std::size_t b = 0; b < cfg.layers; ++b, i += kBlockTensors) l.encoder.push_back(block_slots(i));
  l.enc_norm_g = i++, l.enc_norm_b = i++;
  for (std::size_t b = 0; b < cfg.layers; ++b, i += kBlockTensors) l.decoder.push_back(block_slots(i));
  l.dec_norm_g = i++, l.dec_norm_b = i++;
  l.proj_w = i++, l.proj_b = i++;
  return l;
}

template <typename T>
numerics::BasicParameter<T>& BasicModelWeights<T>::find(std::string_view name) {
  for (auto& p : params)
    if (p.name == name) return p;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const numerics::BasicParameter<T>& BasicModelWeights<T>::find(std::string_view name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::size_t BasicModelWeights<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

template <typename T>
void BasicModelWeights<T>::zero_grads() {
  for (auto& p : params) p.zero_grad();
}

template struct BasicModelWeights<float>;
template struct BasicModelWeights<double>;

ModelWeights init_model(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto truncated = [&] {
    double z;
    do z = normal(rng);
    while (std::abs(z) > 2.0);
    return static_cast<float>(0.02 * z);
  };
  ModelWeights w{cfg, {}};
  for (auto& spec : parameter_specs(cfg)) {
    Tensor t(spec.shape);
    if (ends_with(spec.name, "_w") || spec.name == "pos_embed") {
      for (auto& v : t.values()) v = truncated();
    } else if (ends_with(spec.name, "_g")) {
      t.fill(1.0f);
    }
    w.params.emplace_back(spec.name, std::move(t));
  }
  return w;
}

template <typename T>
BasicModelWeights<T> zero_model(const ModelConfig& cfg) {
  BasicModelWeights<T> w{cfg, {}};
  for (auto& spec : parameter_specs(cfg)) w.params.emplace_back(spec.name, numerics::BasicTensor<T>(spec.shape));
  return w;
}

template BasicModelWeights<float> zero_model<float>(const ModelConfig&);
template BasicModelWeights<double> zero_model<double>(const ModelConfig&);

template <typename T>
BoundWeights<T> bind(Graph<T>& g, BasicModelWeights<T>& w) {
  BoundWeights<T> b;
  b.layout = parameter_layout(w.config);
  b.vars.reserve(w.params.size());
  for (auto& p : w.params) b.vars.push_back(g.parameter(p));
  return b;
}

namespace {

template <typename T>
BoundWeights<T> bind_const(Graph<T>& g, const BasicModelWeights<T>& w) {
  BoundWeights<T> b;
  b.layout = parameter_layout(w.config);
  b.vars.reserve(w.params.size());
  for (const auto& p : w.params) b.vars.push_back(g.constant_ref(p.value));
  return b;
}

}  // namespace

template <typename T>
Var embed(Graph<T>& g, Var tokens, const BoundWeights<T>& w, const ModelConfig& cfg) {
  const auto& shape = g.value(tokens).shape();
  if (shape.size() != 3 || shape[1] != cfg.tokens() || shape[2] != cfg.token_in()) {
    throw DimensionError("embed: token batch " + numerics::to_string(shape) + " does not match config [B," +
                         std::to_string(cfg.tokens()) + "," + std::to_string(cfg.token_in()) + "]");
  }
  Var x = numerics::linear(g, tokens, w[w.layout.embed_w], w[w.layout.embed_b]);
  return numerics::add(g, x, w[w.layout.pos_embed]);
}

template <typename T>
Var block_forward(Graph<T>& g, Var x, const BoundWeights<T>& w, const BlockSlots& s, const ModelConfig& cfg,
                  Var* attention) {
  const std::size_t heads = cfg.heads;
  Var h = numerics::layer_norm(g, x, w[s.ln1_g], w[s.ln1_b], cfg.eps);
  Var qkv = numerics::linear(g, h, w[s.qkv_w], w[s.qkv_b]);
  Var q = numerics::split_heads(g, qkv, 0, heads);
  Var k = numerics::split_heads(g, qkv, 1, heads);
  Var v = numerics::split_heads(g, qkv, 2, heads);
  Var scores = numerics::matmul(g, q, k, numerics::Transpose::Yes);
  scores = numerics::scale(g, scores, 1.0 / std::sqrt(static_cast<double>(cfg.head_dim())));
  Var probs = numerics::softmax(g, scores, 2);
  if (attention) *attention = probs;
  Var ctx = numerics::matmul(g, probs, v);
  ctx = numerics::merge_heads(g, ctx, heads);
  Var attn_out = numerics::linear(g, ctx, w[s.attn_out_w], w[s.attn_out_b]);
  Var u = numerics::add(g, x, attn_out);

  Var h2 = numerics::layer_norm(g, u, w[s.ln2_g], w[s.ln2_b], cfg.eps);
  Var m = numerics::linear(g, h2, w[s.mlp1_w], w[s.mlp1_b]);
  m = numerics::gelu(g, m);
  m = numerics::linear(g, m, w[s.mlp2_w], w[s.mlp2_b]);
  return numerics::add(g, u, m);
}

template <typename T>
Var encoder_forward(Graph<T>& g, Var x, const BoundWeights<T>& w, const ModelConfig& cfg, const TraceRequest& trace,
                    std::vector<AttentionTrace>* traces) {
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const bool keep = trace.enabled && traces && (!trace.layer || *trace.layer == l);
    Var probs;
    x = block_forward(g, x, w, w.layout.encoder[l], cfg, keep ? &probs : nullptr);
    if (!keep) continue;
    const auto& P = g.value(probs);  // [B*H, N, N]
    const std::size_t n = P.dim(1);
    const std::size_t batch = P.dim(0) / cfg.heads;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
        AttentionTrace t;
        t.layer = l;
        t.head = hd;
        t.window = b;
        t.grid_side = cfg.grid_side();
        t.patch_size = cfg.patch_size;
        const T* src = P.data() + (b * cfg.heads + hd) * n * n;
        t.matrix = Tensor({n, n});
        for (std::size_t i = 0; i < n * n; ++i) t.matrix[i] = static_cast<float>(src[i]);
        traces->push_back(std::move(t));
      }
  }
  return numerics::layer_norm(g, x, w[w.layout.enc_norm_g], w[w.layout.enc_norm_b], cfg.eps);
}

template <typename T>
Var decoder_forward(Graph<T>& g, Var latent, const BoundWeights<T>& w, const ModelConfig& cfg) {
  Var x = latent;
  for (std::size_t l = 0; l < cfg.layers; ++l) x = block_forward(g, x, w, w.layout.decoder[l], cfg);
  return numerics::layer_norm(g, x, w[w.layout.dec_norm_g], w[w.layout.dec_norm_b], cfg.eps);
}

template <typename T>
Var project_output(Graph<T>& g, Var decoded, const BoundWeights<T>& w, const ModelConfig& cfg) {
  Var out = numerics::linear(g, decoded, w[w.layout.proj_w], w[w.layout.proj_b]);
  if (cfg.head == OutputHead::Sigmoid) out = numerics::sigmoid(g, out);
  return out;
}

template <typename T>
Var forward_tokens(Graph<T>& g, Var tokens, const BoundWeights<T>& w, const ModelConfig& cfg,
                   const TraceRequest& trace, std::vector<AttentionTrace>* traces) {
  Var x = embed(g, tokens, w, cfg);
  Var latent = encoder_forward(g, x, w, cfg, trace, traces);
  Var decoded = decoder_forward(g, latent, w, cfg);
  return project_output(g, decoded, w, cfg);
}

Tensor batch_tokens(std::span<const ImageBuffer> windows, const ModelConfig& cfg) {
  if (windows.empty()) throw ContractError("empty window batch");
  const std::size_t n = cfg.tokens();
  const std::size_t len = cfg.token_in();
  Tensor out({windows.size(), n, len});
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const ImageBuffer& w = windows[b];
    if (w.height() != cfg.window_size || w.width() != cfg.window_size) {
      throw DimensionError("window " + std::to_string(w.height()) + "x" + std::to_string(w.width()) +
                           " does not match configured window size " + std::to_string(cfg.window_size));
    }
    const auto seq = patching::tokenize_window(w.replicate(cfg.in_channels), cfg.patch_size);
    std::copy_n(seq.tokens.data(), n * len, out.data() + b * n * len);
  }
  return out;
}

namespace {

std::vector<ImageBuffer> unpack_outputs(const Tensor& out, const ModelConfig& cfg) {
  const std::size_t batch = out.dim(0);
  const std::size_t n = cfg.tokens();
  const std::size_t len = cfg.token_out();
  std::vector<ImageBuffer> result;
  result.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    patching::PatchSequence seq{Tensor({n, len}), cfg.patch_size, cfg.window_size, cfg.out_channels};
    std::copy_n(out.data() + b * n * len, n * len, seq.tokens.data());
    ImageBuffer img = patching::detokenize(seq);
    img.clamp();
    result.push_back(std::move(img));
  }
  return result;
}

}  // namespace

std::vector<ImageBuffer> forward_windows(std::span<const ImageBuffer> windows, const ModelWeights& w,
                                         std::size_t batch) {
  if (batch == 0) throw ContractError("batch size must be positive");
  std::vector<ImageBuffer> out;
  out.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += batch) {
    const auto chunk = windows.subspan(start, std::min(batch, windows.size() - start));
    Graph<float> g;
    const auto bound = bind_const(g, w);
    Var tokens = g.constant(batch_tokens(chunk, w.config));
    Var pred = forward_tokens(g, tokens, bound, w.config);
    for (auto& img : unpack_outputs(g.value(pred), w.config)) out.push_back(std::move(img));
  }
  return out;
}

ImageBuffer forward_window(const ImageBuffer& window, const ModelWeights& w) {
  return std::move(forward_windows(std::span(&window, 1), w, 1).front());
}

std::vector<AttentionTrace> encoder_attention(const ImageBuffer& window, const ModelWeights& w,
                                              std::optional<std::size_t> layer) {
  if (layer && *layer >= w.config.layers) {
    throw ContractError("layer " + std::to_string(*layer) + " out of range (model has " +
                        std::to_string(w.config.layers) + ")");
  }
  Graph<float> g;
  const auto bound = bind_const(g, w);
  Var tokens = g.constant(batch_tokens(std::span(&window, 1), w.config));
  std::vector<AttentionTrace> traces;
  Var x = embed(g, tokens, bound, w.config);
  encoder_forward(g, x, bound, w.config, TraceRequest{true, layer}, &traces);
  return traces;
}

ImageBuffer render_attention_row(std::span<const float> row, std::size_t grid_side, std::size_t patch_size) {
  if (row.size() != grid_side * grid_side) throw DimensionError("attention row does not match the patch grid");
  const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
  const float range = *hi - *lo;
  const std::size_t s = grid_side * patch_size;
  ImageBuffer map(s, s, 1);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const float v = row[(y / patch_size) * grid_side + x / patch_size];
      map.at(y, x) = range > 0 ? (v - *lo) / range : 0.5f;
    }
  return map;
}

std::vector<ImageBuffer> attention_maps(const ImageBuffer& window, const ModelWeights& w, std::size_t layer,
                                        std::size_t head, std::span<const std::size_t> query_tokens) {
  const auto& cfg = w.config;
  if (layer >= cfg.layers) throw ContractError("layer " + std::to_string(layer) + " out of range");
  if (head >= cfg.heads) throw ContractError("head " + std::to_string(head) + " out of range");
  for (auto q : query_tokens)
    if (q >= cfg.tokens()) {
      throw ContractError("query token " + std::to_string(q) + " out of range (window has " +
                          std::to_string(cfg.tokens()) + " tokens)");
    }
  const auto traces = encoder_attention(window, w, layer);
  const AttentionTrace& t = traces.at(head);
  const std::size_t n = cfg.tokens();
  std::vector<ImageBuffer> maps;
  for (auto q : query_tokens) {
    maps.push_back(render_attention_row(std::span<const float>(t.matrix.data() + q * n, n), cfg.grid_side(),
                                        cfg.patch_size));
  }
  return maps;
}

#define DOCENTR_INSTANTIATE_MODEL(T)                                                                              \
  template BoundWeights<T> bind<T>(Graph<T>&, BasicModelWeights<T>&);                                          \
  template Var embed<T>(Graph<T>&, Var, const BoundWeights<T>&, const ModelConfig&);                           \
  template Var block_forward<T>(Graph<T>&, Var, const BoundWeights<T>&, const BlockSlots&, const ModelConfig&, \
                                Var*);                                                                         \
  template Var encoder_forward<T>(Graph<T>&, Var, const BoundWeights<T>&, const ModelConfig&,                  \
                                  const TraceRequest&, std::vector<AttentionTrace>*);                          \
  template Var decoder_forward<T>(Graph<T>&, Var, const BoundWeights<T>&, const ModelConfig&);                 \
  template Var project_output<T>(Graph<T>&, Var, const BoundWeights<T>&, const ModelConfig&);                  \
  template Var forward_tokens<T>(Graph<T>&, Var, const BoundWeights<T>&, const ModelConfig&,                   \
                                 const TraceRequest&, std::vector<AttentionTrace>*);

DOCENTR_INSTANTIATE_MODEL(float)
DOCENTR_INSTANTIATE_MODEL(double)

}  // namespace docentr::model
