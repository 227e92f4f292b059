#include <doctest.h>

#include <algorithm>
#include <array>
#include <random>

#include "docentr/error.hpp"
#include "docentr/model.hpp"
#include "docentr/numerics/ops.hpp"

using namespace docentr;
using namespace docentr::model;
using numerics::Graph;
using numerics::Shape;
using numerics::Tensor;

namespace {

ModelConfig tiny(std::size_t layers = 2, std::size_t dim = 16, std::size_t heads = 2, std::size_t p = 4,
                 std::size_t s = 16) {
  ModelConfig c;
  c.layers = layers;
  c.dim = dim;
  c.heads = heads;
  c.patch_size = p;
  c.window_size = s;
  return c;
}

ImageBuffer random_window(std::size_t s, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0, 1);
  ImageBuffer w(s, s, c);
  for (auto& v : w.values()) v = u(rng);
  return w;
}

// Shape enumeration written out independently of parameter_specs().
std::size_t enumerated_count(std::size_t L, std::size_t D, std::size_t p, std::size_t S, std::size_t cin,
                             std::size_t cout, std::size_t r) {
  const std::size_t n = (S / p) * (S / p);
  const std::size_t block = 2 * D + (D * 3 * D + 3 * D) + (D * D + D) + 2 * D + (D * r * D + r * D) + (r * D * D + D);
  return (p * p * cin * D + D) + n * D + 2 * L * block + 4 * D + (D * p * p * cout + p * p * cout);
}

}  // namespace

TEST_CASE("variant presets") {
  const ModelConfig base = variant(Variant::Base, 16, 256);
  CHECK(base.layers == 12);
  CHECK(base.dim == 768);
  CHECK(base.heads == 8);
  const ModelConfig small = variant("small", 16, 256);
  CHECK(small.layers == 6);
  CHECK(small.dim == 512);
  CHECK(small.heads == 4);
  const ModelConfig large = variant("LARGE", 16, 256);
  CHECK(large.layers == 24);
  CHECK(large.dim == 1024);
  CHECK(large.heads == 16);

  const ModelConfig b8 = variant("base", 8, 256);
  CHECK(b8.patch_size == 8);
  CHECK(b8.tokens() == 1024);
  CHECK(matching_variant(b8) == Variant::Base);
  CHECK(!matching_variant(tiny()).has_value());

  CHECK_THROWS(variant("huge", 16, 256));
  CHECK_THROWS(variant(Variant::Base, 24, 256));
  CHECK(nominal_parameters(Variant::Small) == "17M");
  CHECK(nominal_parameters(Variant::Base) == "68M");
  CHECK(nominal_parameters(Variant::Large) == "255M");
}

TEST_CASE("config validation") {
  ModelConfig c = tiny();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = tiny();
  c.layers = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("parameter count of Base with 16px patches on 256px windows") {
  const ModelConfig base = variant(Variant::Base, 16, 256);
  CHECK(param_count(base) == enumerated_count(12, 768, 16, 256, 3, 1, 4));
  CHECK(param_count(base) == 171096064);
  CHECK(init_model(tiny(), 0).param_count() == param_count(tiny()));
}

TEST_CASE("parameter shapes follow the config for every preset") {
  for (Variant v : {Variant::Small, Variant::Base, Variant::Large})
    for (std::size_t p : {8, 16, 32})
      for (std::size_t s : {256, 512}) {
        const ModelConfig c = variant(v, p, s);
        CHECK(param_count(c) == enumerated_count(c.layers, c.dim, p, s, 3, 1, 4));
        const auto specs = parameter_specs(c);
        auto find = [&](const std::string& n) {
          return std::find_if(specs.begin(), specs.end(), [&](const ParamSpec& ps) { return ps.name == n; })->shape;
        };
        CHECK(find("embed_w") == Shape{p * p * 3, c.dim});
        CHECK(find("pos_embed") == Shape{c.tokens(), c.dim});
        CHECK(find("proj_w") == Shape{c.dim, p * p});
        const ParamLayout layout = parameter_layout(c);
        CHECK(layout.encoder.size() == c.layers);
        CHECK(layout.decoder.size() == c.layers);
      }
  CHECK(variant(Variant::Base, 16, 512).tokens() == 1024);
}

TEST_CASE("init_model is deterministic and follows the initialization scheme") {
  const ModelConfig c = tiny();
  const ModelWeights a = init_model(c, 42), b = init_model(c, 42), other = init_model(c, 43);
  bool identical = true, differs = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    identical = identical && a.params[i].value == b.params[i].value;
    differs = differs || !(a.params[i].value == other.params[i].value);
  }
  CHECK(identical);
  CHECK(differs);

  for (const auto& p : a.params) {
    const std::string& n = p.name;
    for (float v : p.value.values()) {
      if (n.ends_with("_w") || n == "pos_embed") {
        CHECK(std::abs(v) <= 0.04f);
      } else if (n.ends_with("_g")) {
        CHECK(v == 1.0f);
      } else {
        CHECK(v == 0.0f);
      }
    }
  }
}

TEST_CASE("embed adds positions to a linear map of the tokens") {
  const ModelConfig c = tiny();
  ModelWeights w = zero_model<float>(c);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : w.find("pos_embed").value.values()) v = u(rng);
  Graph<float> g;
  auto bound = bind(g, w);
  const Tensor out = g.value(embed(g, g.constant(Tensor({1, c.tokens(), c.token_in()})), bound, c));
  const Tensor& pos = w.find("pos_embed").value;
  for (std::size_t i = 0; i < pos.size(); ++i) CHECK(out[i] == pos[i]);

  CHECK_THROWS_AS(embed(g, g.constant(Tensor({1, c.tokens() + 1, c.token_in()})), bound, c), DimensionError);
}

TEST_CASE("zero block weights make a block the identity") {
  const ModelConfig c = tiny();
  ModelWeights w = zero_model<float>(c);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor x({2, c.tokens(), c.dim});
  for (auto& v : x.values()) v = u(rng);
  Graph<float> g;
  auto bound = bind(g, w);
  CHECK(g.value(block_forward(g, g.constant(x), bound, bound.layout.encoder[0], c)) == x);
}

TEST_CASE("a single token attends only to itself") {
  const ModelConfig c = tiny(1, 8, 2, 4, 4);
  ModelWeights w = init_model(c, 3);
  Graph<float> g;
  auto bound = bind(g, w);
  Tensor x({1, 1, c.dim}, 0.3f);
  numerics::Var probs;
  block_forward(g, g.constant(x), bound, bound.layout.encoder[0], c, &probs);
  const Tensor& a = g.value(probs);
  CHECK(a.shape() == Shape{2, 1, 1});
  CHECK(a[0] == 1.0f);
  CHECK(a[1] == 1.0f);
}

TEST_CASE("encoder traces") {
  const ModelConfig c = tiny(3, 16, 2, 4, 16);
  const ModelWeights w = init_model(c, 4);
  const ImageBuffer window = random_window(16, 3, 5);
  const auto all = encoder_attention(window, w);
  CHECK(all.size() == c.layers * c.heads);
  for (const auto& t : all) {
    REQUIRE(t.matrix.shape() == Shape{c.tokens(), c.tokens()});
    for (std::size_t r = 0; r < c.tokens(); ++r) {
      double s = 0;
      for (std::size_t k = 0; k < c.tokens(); ++k) {
        CHECK(t.matrix[r * c.tokens() + k] >= 0.0f);
        s += t.matrix[r * c.tokens() + k];
      }
      CHECK(std::abs(s - 1.0) < 1e-5);
    }
  }
  const auto last = encoder_attention(window, w, 2);
  CHECK(last.size() == c.heads);
  CHECK(last[1].layer == 2);
  CHECK(last[1].head == 1);

  ModelWeights mutable_w = w;
  Graph<float> g;
  auto bound = bind(g, mutable_w);
  std::vector<AttentionTrace> traces;
  encoder_forward(g, g.constant(Tensor({1, c.tokens(), c.dim}, 0.1f)), bound, c, {}, &traces);
  CHECK(traces.empty());
}

TEST_CASE("block order matters") {
  const ModelConfig c = tiny(2, 16, 2, 4, 16);
  const ModelWeights w = init_model(c, 6);
  ModelWeights swapped = w;
  const ParamLayout layout = parameter_layout(c);
  const auto& e0 = layout.encoder[0];
  const auto& e1 = layout.encoder[1];
  auto slots = [](const BlockSlots& s) {
    return std::array<std::size_t, 12>{s.ln1_g,  s.ln1_b, s.qkv_w,  s.qkv_b,  s.attn_out_w, s.attn_out_b,
                                       s.ln2_g,  s.ln2_b, s.mlp1_w, s.mlp1_b, s.mlp2_w,     s.mlp2_b};
  };
  const auto a = slots(e0), b = slots(e1);
  for (std::size_t k = 0; k < 12; ++k) std::swap(swapped.params[a[k]].value, swapped.params[b[k]].value);
  const ImageBuffer window = random_window(16, 3, 7);
  CHECK(!(forward_window(window, w) == forward_window(window, swapped)));
}

TEST_CASE("zero decoder blocks leave only the final normalization") {
  const ModelConfig c = tiny();
  ModelWeights w = zero_model<float>(c);
  for (auto& p : w.params)
    if (p.name == "final_ln_dec_g") p.value.fill(1.0f);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor latent({1, c.tokens(), c.dim});
  for (auto& v : latent.values()) v = u(rng);

  Graph<float> g;
  auto bound = bind(g, w);
  auto in = g.constant(latent);
  const Tensor out = g.value(decoder_forward(g, in, bound, c));
  const Tensor ref = g.value(numerics::layer_norm(g, in, g.constant(Tensor({c.dim}, 1.0f)),
                                                  g.constant(Tensor({c.dim}, 0.0f)), c.eps));
  CHECK(out == ref);
  CHECK(out.shape() == Shape{1, c.tokens(), c.dim});
}

TEST_CASE("projection head") {
  for (std::size_t p : {8, 16}) {
    const ModelConfig c = tiny(1, 16, 2, p, 2 * p);
    ModelWeights w = zero_model<float>(c);
    w.find("proj_b").value.fill(0.5f);
    Graph<float> g;
    auto bound = bind(g, w);
    const Tensor out = g.value(project_output(g, g.constant(Tensor({1, c.tokens(), c.dim}, 0.3f)), bound, c));
    CHECK(out.dim(2) == p * p);
    for (float v : out.values()) CHECK(v == 0.5f);
  }
}

TEST_CASE("forward_window produces a clamped single-channel window") {
  const ModelConfig c = tiny();
  ModelWeights w = init_model(c, 9);
  w.find("proj_b").value.fill(2.0f);  // pushes raw outputs above 1
  const ImageBuffer window = random_window(16, 3, 10);
  const ImageBuffer out = forward_window(window, w);
  CHECK(out.height() == 16);
  CHECK(out.width() == 16);
  CHECK(out.channels() == 1);
  for (float v : out.values()) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK(out == forward_window(window, w));

  // grayscale windows are replicated
  const ImageBuffer gray = window.to_gray();
  CHECK(forward_window(gray, w) == forward_window(gray.replicate(3), w));

  const auto batch = forward_windows(std::vector<ImageBuffer>{window, gray.replicate(3), window}, w, 2);
  CHECK(batch[0] == out);
  CHECK(batch[2] == out);
}

TEST_CASE("every preset geometry runs with a narrow surrogate width") {
  for (std::size_t p : {8, 16, 32})
    for (std::size_t s : {256, 512}) {
      ModelConfig c = tiny(1, 8, 2, p, s);
      const ModelWeights w = init_model(c, 11);
      const ImageBuffer out = forward_window(ImageBuffer(s, s, 3, 0.8f), w);
      CHECK(out.height() == s);
      CHECK(out.channels() == 1);
    }
}

TEST_CASE("attention maps") {
  const ModelConfig c = tiny(2, 16, 2, 4, 16);
  const ModelWeights w = init_model(c, 12);
  const ImageBuffer window = random_window(16, 3, 13);
  CHECK(default_attention_layer(c) == 1);
  CHECK(kDefaultAttentionHead == 1);
  const std::vector<std::size_t> tokens{0, 5, 15};
  const auto maps = attention_maps(window, w, default_attention_layer(c), kDefaultAttentionHead, tokens);
  REQUIRE(maps.size() == 3);
  for (const auto& m : maps) {
    CHECK(m.height() == 16);
    CHECK(m.width() == 16);
    const auto [lo, hi] = std::minmax_element(m.values().begin(), m.values().end());
    CHECK(*lo == 0.0f);
    CHECK(*hi == 1.0f);
  }
  const std::vector<std::size_t> bad{16};
  CHECK_THROWS(attention_maps(window, w, 1, 1, bad));
  CHECK_THROWS(attention_maps(window, w, 2, 1, tokens));
  CHECK_THROWS(attention_maps(window, w, 1, 2, tokens));
}

TEST_CASE("attention row rendering") {
  const std::vector<float> flat(4, 0.25f);
  const ImageBuffer c = render_attention_row(flat, 2, 3);
  CHECK(c.height() == 6);
  for (float v : c.values()) CHECK(v == 0.5f);

  const std::vector<float> row{0.1f, 0.2f, 0.3f, 0.4f};
  const ImageBuffer r = render_attention_row(row, 2, 2);
  CHECK(r.at(0, 0) == 0.0f);
  CHECK(r.at(1, 1) == 0.0f);
  CHECK(r.at(3, 3) == 1.0f);
  CHECK(r.at(0, 2) == doctest::Approx(1.0 / 3));
}
