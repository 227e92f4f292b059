#include <doctest.h>

#include <random>

#include "docentr/error.hpp"
#include "docentr/patching.hpp"

using namespace docentr;
using namespace docentr::patching;

namespace {

ImageBuffer random_image(std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng) {
  ImageBuffer img(h, w, c);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& v : img.values()) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("grid for an exact fit") {
  const WindowGrid g = make_grid(256, 256, 256);
  CHECK(g.padded_height == 256);
  CHECK(g.padded_width == 256);
  CHECK(g.window_count() == 1);
}

TEST_CASE("grid for 300x500 at S=256") {
  const WindowGrid g = make_grid(300, 500, 256);
  CHECK(g.stride == 128);
  CHECK(g.padded_height == 384);
  CHECK(g.padded_width == 512);
  CHECK(g.row_starts == std::vector<std::size_t>{0, 128});
  CHECK(g.col_starts == std::vector<std::size_t>{0, 128, 256});
  CHECK(g.window_count() == 6);
  CHECK(g.origin(4) == std::pair<std::size_t, std::size_t>{128, 128});
}

TEST_CASE("grid for an image smaller than the window") {
  const WindowGrid g = make_grid(100, 100, 256);
  CHECK(g.padded_height == 256);
  CHECK(g.padded_width == 256);
  CHECK(g.window_count() == 1);
}

TEST_CASE("grid rejects odd windows") {
  CHECK_THROWS(make_grid(10, 10, 7));
  CHECK_THROWS(make_grid(10, 10, 0));
}

TEST_CASE("padded extent is the smallest stride-compatible size") {
  for (std::size_t e = 1; e <= 700; e += 13) {
    const WindowGrid g = make_grid(e, e, 256);
    CHECK(g.padded_height >= e);
    CHECK((g.padded_height - 256) % 128 == 0);
    if (g.padded_height > 256) CHECK(g.padded_height - 128 < e);
  }
}

TEST_CASE("padding is white on the right and bottom") {
  ImageBuffer img(3, 5, 1, 0.25f);
  auto [padded, grid] = pad_to_grid(img, 8);
  CHECK(padded.height() == 8);
  CHECK(padded.width() == 8);
  CHECK(padded.at(2, 4) == 0.25f);
  CHECK(padded.at(3, 0) == 1.0f);
  CHECK(padded.at(0, 5) == 1.0f);
}

TEST_CASE("windows are aligned copies of the padded image") {
  std::mt19937_64 rng(1);
  const ImageBuffer img = random_image(300, 500, 3, rng);
  auto [padded, grid] = pad_to_grid(img, 256);
  const auto windows = extract_windows(padded, grid);
  REQUIRE(windows.size() == 6);
  CHECK(windows[0].at(0, 0, 2) == img.at(0, 0, 2));
  // windows 0 and 1 share columns 128..255
  for (std::size_t y = 0; y < 256; y += 17)
    for (std::size_t x = 0; x < 128; x += 11) CHECK(windows[0].at(y, 128 + x, 1) == windows[1].at(y, x, 1));

  const WindowGrid single = make_grid(256, 256, 256);
  const ImageBuffer exact = random_image(256, 256, 1, rng);
  CHECK(extract_windows(exact, single)[0] == exact);
}

TEST_CASE("stitching extracted windows reproduces the image") {
  std::mt19937_64 rng(2);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{300, 500}, {64, 700}, {513, 257}}) {
    const ImageBuffer img = random_image(h, w, 1, rng);
    auto [padded, grid] = pad_to_grid(img, 256);
    const ImageBuffer back = stitch_windows(extract_windows(padded, grid), grid);
    REQUIRE(back.same_geometry(img));
    for (std::size_t i = 0; i < img.values().size(); ++i) CHECK(std::abs(back.values()[i] - img.values()[i]) < 1e-6);
  }
}

TEST_CASE("stitching averages disagreeing windows") {
  const WindowGrid grid = make_grid(4, 6, 4);  // windows at columns 0 and 2
  REQUIRE(grid.window_count() == 2);
  std::vector<ImageBuffer> windows{ImageBuffer(4, 4, 1, 0.7f), ImageBuffer(4, 4, 1, 0.3f)};
  const ImageBuffer out = stitch_windows(windows, grid);
  CHECK(out.at(0, 0) == doctest::Approx(0.7));
  CHECK(out.at(0, 2) == doctest::Approx(0.5));
  CHECK(out.at(0, 5) == doctest::Approx(0.3));

  windows.pop_back();
  CHECK_THROWS(stitch_windows(windows, grid));
}

TEST_CASE("stitching white windows gives a white image") {
  const WindowGrid grid = make_grid(20, 30, 16);
  std::vector<ImageBuffer> windows(grid.window_count(), ImageBuffer(16, 16, 1, 1.0f));
  const ImageBuffer out = stitch_windows(windows, grid);
  for (float v : out.values()) CHECK(v == 1.0f);
}

TEST_CASE("coverage counts are 1, 2 or 4") {
  const WindowGrid grid = make_grid(300, 500, 256);
  const auto cov = coverage(grid);
  CHECK(cov.size() == grid.padded_height * grid.padded_width);
  for (auto c : cov) CHECK((c == 1 || c == 2 || c == 4));
  CHECK(cov[200 * grid.padded_width + 200] == 4);
}

TEST_CASE("tokenize counts") {
  ImageBuffer w(256, 256, 3, 0.5f);
  const PatchSequence s16 = tokenize_window(w, 16);
  CHECK(s16.token_count() == 256);
  CHECK(s16.token_length() == 768);
  const PatchSequence s8 = tokenize_window(w, 8);
  CHECK(s8.token_count() == 1024);
  CHECK(s8.token_length() == 192);
  CHECK_THROWS(tokenize_window(w, 24));
}

TEST_CASE("tokenize ordering") {
  // 2x2 patch grid with distinct constant patches
  ImageBuffer w(4, 4, 1);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) w.at(y, x) = static_cast<float>((y / 2) * 2 + x / 2) / 4.0f;
  const PatchSequence s = tokenize_window(w, 2);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t k = 0; k < 4; ++k) CHECK(s.tokens[t * 4 + k] == static_cast<float>(t) / 4.0f);

  // within a patch: (y, x, c) row-major
  ImageBuffer c(2, 2, 3);
  for (std::size_t i = 0; i < 12; ++i) c.values()[i] = static_cast<float>(i) / 12.0f;
  const PatchSequence one = tokenize_window(c, 2);
  for (std::size_t i = 0; i < 12; ++i) CHECK(one.tokens[i] == c.values()[i]);
  CHECK(detokenize(one) == c);
}

TEST_CASE("detokenize inverts tokenize") {
  std::mt19937_64 rng(3);
  for (std::size_t p : {4, 8, 16}) {
    const ImageBuffer w = random_image(32, 32, 3, rng);
    CHECK(detokenize(tokenize_window(w, p)) == w);
  }
}
