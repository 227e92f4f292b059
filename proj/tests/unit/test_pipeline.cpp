#include <doctest.h>

#include <random>

#include "docentr/error.hpp"
#include "docentr/pipeline.hpp"

using namespace docentr;

namespace {

model::ModelConfig tiny() {
  model::ModelConfig c;
  c.layers = 1;
  c.dim = 8;
  c.heads = 2;
  c.patch_size = 4;
  c.window_size = 16;
  return c;
}

}  // namespace

TEST_CASE("enhance keeps the page geometry") {
  const model::ModelWeights w = model::init_model(tiny(), 1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  ImageBuffer page(37, 21, 3);
  for (auto& v : page.values()) v = u(rng);
  const ImageBuffer out = pipeline::enhance(page, w);
  CHECK(out.height() == 37);
  CHECK(out.width() == 21);
  CHECK(out.channels() == 1);
  CHECK(out == pipeline::enhance(page, w));
  const BinaryImage bin = pipeline::binarize_page(page, w);
  CHECK(bin.height() == 37);
  for (auto v : bin.values()) CHECK((v == 0 || v == 1));
}

TEST_CASE("enhance with a constant head") {
  model::ModelWeights w = model::zero_model<float>(tiny());
  w.find("proj_b").value.fill(0.25f);
  const ImageBuffer out = pipeline::enhance(ImageBuffer(40, 40, 1, 0.9f), w);
  for (float v : out.values()) CHECK(v == doctest::Approx(0.25f));
  CHECK(pipeline::binarize_page(ImageBuffer(40, 40, 1, 0.9f), w).foreground_count() == 1600);
}

TEST_CASE("enhance rejects a channel mismatch") {
  model::ModelConfig c = tiny();
  c.in_channels = 1;
  const model::ModelWeights w = model::init_model(c, 1);
  CHECK_THROWS_AS(pipeline::enhance(ImageBuffer(16, 16, 3), w), DimensionError);
}
