#include "docentr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "docentr/error.hpp"

namespace docentr::metrics {

namespace {

void require_same_size(const BinaryImage& a, const BinaryImage& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("prediction " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " vs ground truth " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

double harmonic(double p, double r) { return (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

BinaryImage binarize(const ImageBuffer& gray, double threshold) {
  if (!(threshold > 0 && threshold < 1)) throw ContractError("threshold must lie in (0,1)");
  const ImageBuffer g = gray.to_gray();
  std::vector<std::uint8_t> px(g.pixel_count());
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = g.values()[i] <= threshold ? BinaryImage::kForeground : BinaryImage::kBackground;
  }
  return BinaryImage(g.height(), g.width(), std::move(px));
}

double psnr(const BinaryImage& pred, const BinaryImage& gt) {
  require_same_size(pred, gt);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) diff += pred.values()[i] != gt.values()[i];
  if (diff == 0) return std::numeric_limits<double>::infinity();
  const double mse = static_cast<double>(diff) / static_cast<double>(gt.size());
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const ImageBuffer& pred, const BinaryImage& gt) {
  const ImageBuffer g = pred.to_gray();
  if (g.height() != gt.height() || g.width() != gt.width()) throw DimensionError("psnr: size mismatch");
  double total = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double d = static_cast<double>(g.values()[i]) - gt.values()[i];
    total += d * d;
  }
  if (total == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(gt.size()) / total);
}

Confusion confusion(const BinaryImage& pred, const BinaryImage& gt) {
  require_same_size(pred, gt);
  Confusion c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool p = pred.values()[i] == BinaryImage::kForeground;
    const bool g = gt.values()[i] == BinaryImage::kForeground;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f_measure(const BinaryImage& pred, const BinaryImage& gt) {
  const Confusion c = confusion(pred, gt);
  if (c.tp + c.fn == 0) throw UndefinedMetric("F-measure undefined: ground truth has no foreground");
  if (c.tp == 0) return 0.0;
  const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return 100.0 * harmonic(precision, recall);
}

BinaryImage thin(const BinaryImage& b) {
  const std::size_t h = b.height(), w = b.width();
  // ink as 1 with a one pixel paper border
  const std::size_t W = w + 2;
  std::vector<std::uint8_t> ink((h + 2) * W, 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) ink[(y + 1) * W + x + 1] = b.is_foreground(y, x);

  std::vector<std::size_t> marked;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      marked.clear();
      for (std::size_t y = 1; y <= h; ++y)
        for (std::size_t x = 1; x <= w; ++x) {
          const std::size_t i = y * W + x;
          if (!ink[i]) continue;
          // P2..P9, clockwise from north
          const std::uint8_t p[8] = {ink[i - W], ink[i - W + 1], ink[i + 1], ink[i + W + 1],
                                     ink[i + W], ink[i + W - 1], ink[i - 1], ink[i - W - 1]};
          int count = 0, transitions = 0;
          for (int k = 0; k < 8; ++k) {
            count += p[k];
            transitions += !p[k] && p[(k + 1) % 8];
          }
          if (count < 2 || count > 6 || transitions != 1) continue;
          const bool p2 = p[0], p4 = p[2], p6 = p[4], p8 = p[6];
          const bool keep = pass == 0 ? ((p2 && p4 && p6) || (p4 && p6 && p8))
                                      : ((p2 && p4 && p8) || (p2 && p6 && p8));
          if (!keep) marked.push_back(i);
        }
      for (auto i : marked) ink[i] = 0;
      changed = changed || !marked.empty();
    }
  }

  BinaryImage out(h, w, BinaryImage::kBackground);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if (ink[(y + 1) * W + x + 1]) out.at(y, x) = BinaryImage::kForeground;
  return out;
}

double pseudo_f_measure(const BinaryImage& pred, const BinaryImage& gt) {
  const Confusion c = confusion(pred, gt);
  if (c.tp + c.fn == 0) throw UndefinedMetric("pseudo F-measure undefined: ground truth has no foreground");
  BinaryImage skeleton = thin(gt);
  // thinning can erase every stroke of a ground truth made of 2x2 specks
  if (skeleton.foreground_count() == 0) skeleton = gt;
  std::size_t skel = 0, hit = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (skeleton.values()[i] != BinaryImage::kForeground) continue;
    ++skel;
    hit += pred.values()[i] == BinaryImage::kForeground;
  }
  if (c.tp == 0 || hit == 0) return 0.0;
  const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double pseudo_recall = static_cast<double>(hit) / static_cast<double>(skel);
  return 100.0 * harmonic(precision, pseudo_recall);
}

std::array<std::array<double, 5>, 5> drd_weights() {
  std::array<std::array<double, 5>, 5> w{};
  double total = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      if (i == 2 && j == 2) continue;
      w[i][j] = 1.0 / std::sqrt(static_cast<double>((i - 2) * (i - 2) + (j - 2) * (j - 2)));
      total += w[i][j];
    }
  for (auto& row : w)
    for (auto& v : row) v /= total;
  return w;
}

std::size_t nubn(const BinaryImage& gt) {
  constexpr std::size_t kBlock = 8;
  std::size_t count = 0;
  for (std::size_t by = 0; by < gt.height(); by += kBlock)
    for (std::size_t bx = 0; bx < gt.width(); bx += kBlock) {
      bool ink = false, paper = false;
      for (std::size_t y = by; y < std::min(by + kBlock, gt.height()); ++y)
        for (std::size_t x = bx; x < std::min(bx + kBlock, gt.width()); ++x) {
          (gt.is_foreground(y, x) ? ink : paper) = true;
        }
      count += ink && paper;
    }
  return count;
}

double drd(const BinaryImage& pred, const BinaryImage& gt) {
  require_same_size(pred, gt);
  const auto w = drd_weights();
  const auto h = static_cast<std::ptrdiff_t>(gt.height());
  const auto wd = static_cast<std::ptrdiff_t>(gt.width());
  double total = 0;
  bool flipped = false;
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < wd; ++x) {
      const auto pv = pred.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      if (pv == gt.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x))) continue;
      flipped = true;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
          const auto yy = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y + i - 2, 0, h - 1));
          const auto xx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x + j - 2, 0, wd - 1));
          if (gt.at(yy, xx) != pv) total += w[i][j];
        }
    }
  if (!flipped) return 0.0;
  const std::size_t blocks = nubn(gt);
  if (blocks == 0) throw UndefinedMetric("DRD undefined: ground truth has no non-uniform 8x8 block");
  return total / static_cast<double>(blocks);
}

MetricsReport evaluate_pair(const ImageBuffer& pred_gray, const BinaryImage& gt, double threshold) {
  if (pred_gray.height() < gt.height() || pred_gray.width() < gt.width()) {
    throw DimensionError("prediction is smaller than the ground truth");
  }
  const BinaryImage pred = binarize(pred_gray.crop(gt.height(), gt.width()), threshold);
  MetricsReport r;
  r.psnr = psnr(pred, gt);
  r.fm = f_measure(pred, gt);
  r.fps = pseudo_f_measure(pred, gt);
  r.drd = drd(pred, gt);
  return r;
}

MetricsReport corpus_mean(std::span<const MetricsReport> reports) {
  MetricsReport m;
  m.name = "MEAN";
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.psnr += r.psnr;
    m.fm += r.fm;
    m.fps += r.fps;
    m.drd += r.drd;
  }
  const double n = static_cast<double>(reports.size());
  m.psnr /= n;
  m.fm /= n;
  m.fps /= n;
  m.drd /= n;
  return m;
}

std::string format_report_line(const MetricsReport& r) {
  char buf[128];
  if (std::isinf(r.psnr)) {
    std::snprintf(buf, sizeof buf, "\tinf\t%.4f\t%.4f\t%.4f", r.fm, r.fps, r.drd);
  } else {
    std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f\t%.4f\t%.4f", r.psnr, r.fm, r.fps, r.drd);
  }
  return r.name + buf;
}

void write_report(std::ostream& out, std::span<const MetricsReport> reports) {
  for (const auto& r : reports) out << format_report_line(r) << '\n';
  out << format_report_line(corpus_mean(reports)) << '\n';
}

}  // namespace docentr::metrics
