#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "docentr/error.hpp"
#include "docentr/metrics.hpp"

using namespace docentr;
using namespace docentr::metrics;

namespace {

constexpr auto kInk = BinaryImage::kForeground;

// '#' is ink, '.' is paper
BinaryImage parse(const std::vector<std::string>& rows) {
  BinaryImage b(rows.size(), rows[0].size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[y].size(); ++x)
      if (rows[y][x] == '#') b.at(y, x) = kInk;
  return b;
}

BinaryImage random_blob(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  // union of random filled discs and bars
  BinaryImage b(h, w);
  std::uniform_real_distribution<double> u(0, 1);
  const int shapes = 1 + static_cast<int>(u(rng) * 4);
  for (int s = 0; s < shapes; ++s) {
    const double cy = u(rng) * h, cx = u(rng) * w, ry = 1 + u(rng) * h / 3, rx = 1 + u(rng) * w / 3;
    const bool disc = u(rng) < 0.5;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        if (disc ? dy * dy + dx * dx <= 1 : (std::abs(dy) <= 1 && std::abs(dx) <= 1)) b.at(y, x) = kInk;
      }
  }
  return b;
}

}  // namespace

TEST_CASE("binarize threshold rule") {
  CHECK(binarize(ImageBuffer(2, 2, 1, 0.9f)).foreground_count() == 0);
  CHECK(binarize(ImageBuffer(2, 2, 1, 0.1f)).foreground_count() == 4);
  CHECK(binarize(ImageBuffer(2, 2, 1, 0.5f)).foreground_count() == 4);
  CHECK_THROWS(binarize(ImageBuffer(1, 1, 1), 1.0));
}

TEST_CASE("psnr") {
  BinaryImage gt(4, 4), pred(4, 4);
  CHECK(std::isinf(psnr(pred, gt)));
  pred.at(1, 2) = kInk;
  CHECK(std::abs(psnr(pred, gt) - 12.0412) < 1e-3);
  CHECK(psnr(pred, gt) == doctest::Approx(10.0 * std::log10(16.0)));
  CHECK(psnr(BinaryImage(3, 3, kInk), BinaryImage(3, 3)) == 0.0);
  CHECK_THROWS_AS(psnr(BinaryImage(3, 3), BinaryImage(3, 4)), DimensionError);
}

TEST_CASE("psnr decreases with Hamming distance") {
  std::mt19937_64 rng(1);
  const BinaryImage gt = random_blob(20, 20, rng);
  BinaryImage pred = gt;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 50; ++i) {
    auto& v = pred.at(i / 20, i % 20);
    v = 1 - v;
    const double cur = psnr(pred, gt);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("f-measure") {
  const BinaryImage gt = parse({"####.."});
  const BinaryImage pred = parse({"###.#."});
  const Confusion c = confusion(pred, gt);
  CHECK(c.tp == 3);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(f_measure(pred, gt) == 75.0);
  CHECK(f_measure(gt, gt) == 100.0);
  CHECK(f_measure(BinaryImage(1, 6), gt) == 0.0);
  CHECK_THROWS_AS(f_measure(gt, BinaryImage(1, 6)), UndefinedMetric);
}

TEST_CASE("thinning leaves thin shapes alone") {
  const BinaryImage dot = parse({"...", ".#.", "..."});
  CHECK(thin(dot) == dot);
  const BinaryImage line = parse({".......", ".#####.", "......."});
  CHECK(thin(line) == line);
}

TEST_CASE("thinning matches the reference implementation") {
  CHECK(thin(parse({".........", ".........", "..#####..", "..#####..", "..#####..", "..#####..", "..#####..",
                    ".........", "........."})) ==
        parse({".........", ".........", ".........", ".........", "....#....", ".........", ".........",
               ".........", "........."}));
  CHECK(thin(BinaryImage(5, 5, kInk)) == parse({".....", ".....", "..#..", ".....", "....."}));
  CHECK(thin(parse({"............", "............", ".##########.", ".##########.", ".##########.", "............",
                    "............"})) ==
        parse({"............", "............", "............", "..#######...", "............", "............",
               "............"}));
  CHECK(thin(parse({"....", ".##.", ".##.", "...."})).foreground_count() == 0);

  BinaryImage ellipse(9, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x)
      if ((y - 4) * (y - 4) / 3.0 + (x - 4) * (x - 4) < 9) ellipse.at(y, x) = kInk;
  CHECK(thin(ellipse) == parse({".........", ".........", ".........", "....#....", "....#....", "....#....",
                                ".........", ".........", "........."}));
}

TEST_CASE("thinning is idempotent and stays inside the ink") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const BinaryImage b = random_blob(24, 24, rng);
    const BinaryImage s = thin(b);
    CHECK(thin(s) == s);
    for (std::size_t k = 0; k < b.size(); ++k)
      if (s.values()[k] == kInk) CHECK(b.values()[k] == kInk);
  }
}

TEST_CASE("pseudo f-measure") {
  const BinaryImage gt = parse({"..........", ".########.", ".........."});
  CHECK(pseudo_f_measure(gt, gt) == 100.0);
  const BinaryImage half = parse({"..........", ".####.....", ".........."});
  CHECK(pseudo_f_measure(half, gt) == doctest::Approx(200.0 / 3.0));

  // thick ground truth, prediction covers it plus extra ink
  const BinaryImage thick = parse({"..........", ".########.", ".########.", ".########.", ".........."});
  const BinaryImage extra = parse({"#.........", ".########.", ".########.", ".########.", ".........#"});
  const double precision = 100.0 * 24.0 / 26.0;
  const double fps = pseudo_f_measure(extra, thick);
  CHECK(fps > precision);
  CHECK(fps < 100.0);
  CHECK(pseudo_f_measure(BinaryImage(5, 10), thick) == 0.0);
  CHECK_THROWS_AS(pseudo_f_measure(thick, BinaryImage(5, 10)), UndefinedMetric);
}

TEST_CASE("pseudo f-measure falls back to the ink when the skeleton vanishes") {
  const BinaryImage gt = parse({"....", ".##.", ".##.", "...."});
  CHECK(pseudo_f_measure(gt, gt) == 100.0);
}

TEST_CASE("drd weights") {
  const auto w = drd_weights();
  double total = 0;
  for (const auto& row : w)
    for (double v : row) total += v;
  CHECK(std::abs(total - 1.0) < 1e-9);
  CHECK(w[2][2] == 0.0);
  CHECK(w[1][2] == w[2][1]);
  CHECK(w[1][2] == w[2][3]);
  CHECK(w[1][2] > w[1][1]);
  for (const auto& row : w)
    for (double v : row)
      if (v != 0.0) {
        CHECK(v <= w[1][2]);
        CHECK(v >= w[0][0]);
      }
}

TEST_CASE("nubn") {
  CHECK(nubn(BinaryImage(16, 16)) == 0);
  BinaryImage one(16, 16);
  one.at(3, 3) = kInk;
  CHECK(nubn(one) == 1);
  one.at(12, 3) = kInk;
  CHECK(nubn(one) == 2);
  one.at(13, 4) = kInk;
  CHECK(nubn(one) == 2);
  BinaryImage edge(10, 10);
  edge.at(9, 9) = kInk;
  CHECK(nubn(edge) == 1);
  CHECK(nubn(BinaryImage(16, 16, kInk)) == 0);
}

TEST_CASE("drd of isolated flips") {
  BinaryImage gt(16, 16);
  for (std::size_t y = 1; y <= 2; ++y)
    for (std::size_t x = 1; x <= 2; ++x) gt.at(y, x) = kInk;
  REQUIRE(nubn(gt) == 1);
  CHECK(drd(gt, gt) == 0.0);
  BinaryImage pred = gt;
  pred.at(12, 12) = kInk;
  CHECK(std::abs(drd(pred, gt) - 1.0) < 1e-9);
  pred.at(12, 4) = kInk;
  CHECK(std::abs(drd(pred, gt) - 2.0) < 1e-9);

  BinaryImage white(16, 16), speck(16, 16);
  speck.at(5, 5) = kInk;
  CHECK_THROWS_AS(drd(speck, white), UndefinedMetric);
}

TEST_CASE("drd is zero exactly when prediction equals ground truth") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const BinaryImage gt = random_blob(16, 16, rng);
    if (nubn(gt) == 0) continue;
    CHECK(drd(gt, gt) == 0.0);
    BinaryImage pred = gt;
    pred.at(i, i) = 1 - pred.at(i, i);
    CHECK(drd(pred, gt) > 0.0);
  }
}

TEST_CASE("f-measures are translation invariant") {
  std::mt19937_64 rng(4);
  const BinaryImage gt = random_blob(20, 20, rng), pred = random_blob(20, 20, rng);
  if (gt.foreground_count() == 0) return;
  BinaryImage sg(26, 26), sp(26, 26);
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 0; x < 20; ++x) {
      sg.at(y + 3, x + 3) = gt.at(y, x);
      sp.at(y + 3, x + 3) = pred.at(y, x);
    }
  CHECK(f_measure(sp, sg) == doctest::Approx(f_measure(pred, gt)));
  // thinning sees paper beyond the border in both cases
  CHECK(pseudo_f_measure(sp, sg) == doctest::Approx(pseudo_f_measure(pred, gt)));
}

TEST_CASE("evaluate_pair") {
  BinaryImage gt(16, 16);
  for (std::size_t x = 2; x < 14; ++x) gt.at(8, x) = kInk;
  const MetricsReport perfect = evaluate_pair(gt.to_image(), gt);
  CHECK(std::isinf(perfect.psnr));
  CHECK(perfect.fm == 100.0);
  CHECK(perfect.fps == 100.0);
  CHECK(perfect.drd == 0.0);

  const MetricsReport blank = evaluate_pair(ImageBuffer(16, 16, 1, 1.0f), gt);
  CHECK(blank.fm == 0.0);
  CHECK(blank.fps == 0.0);

  // a larger prediction is cropped to the ground truth
  ImageBuffer big(20, 24, 1, 0.0f);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) big.at(y, x) = gt.to_image().at(y, x);
  CHECK(evaluate_pair(big, gt).fm == 100.0);
  CHECK_THROWS_AS(evaluate_pair(ImageBuffer(8, 8, 1), gt), DimensionError);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0, 1);
  for (int i = 0; i < 10; ++i) {
    ImageBuffer noisy(16, 16, 1);
    for (auto& v : noisy.values()) v = u(rng);
    const MetricsReport r = evaluate_pair(noisy, gt);
    CHECK(std::isfinite(r.psnr));
    CHECK(r.psnr > 0);
    CHECK((r.fm >= 0 && r.fm <= 100));
    CHECK((r.fps >= 0 && r.fps <= 100));
    CHECK(r.drd >= 0);
  }
}

TEST_CASE("report format") {
  std::vector<MetricsReport> rs{{"a", 10.0, 80.0, 90.0, 2.0}, {"b", 20.0, 60.0, 70.0, 4.0}};
  std::ostringstream out;
  write_report(out, rs);
  CHECK(out.str() ==
        "a\t10.0000\t80.0000\t90.0000\t2.0000\n"
        "b\t20.0000\t60.0000\t70.0000\t4.0000\n"
        "MEAN\t15.0000\t70.0000\t80.0000\t3.0000\n");
  std::vector<MetricsReport> swapped{rs[1], rs[0]};
  CHECK(corpus_mean(swapped).psnr == corpus_mean(rs).psnr);
  MetricsReport inf{"c", std::numeric_limits<double>::infinity(), 100, 100, 0};
  CHECK(format_report_line(inf) == "c\tinf\t100.0000\t100.0000\t0.0000");
}
