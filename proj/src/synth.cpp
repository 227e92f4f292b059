#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "docentr/data_io.hpp"
#include "docentr/error.hpp"

namespace docentr::data_io {

namespace {

enum Stream : std::uint32_t { kStrokes = 1, kStain = 2, kNoise = 3 };

// Independent generator per stage so the clean image does not depend on which
// degradations are enabled.
std::mt19937_64 stream(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

class Canvas {
 public:
  Canvas(std::size_t h, std::size_t w) : h_(h), w_(w), ink_(h * w, 0) {}

  // Disc of diameter `width` centred at (cy, cx); the pixel under the centre is always inked.
  void stamp(double cy, double cx, double width) {
    const double r = width / 2.0;
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(cy - r)), y1 = static_cast<std::ptrdiff_t>(std::ceil(cy + r));
    const auto x0 = static_cast<std::ptrdiff_t>(std::floor(cx - r)), x1 = static_cast<std::ptrdiff_t>(std::ceil(cx + r));
    for (auto y = y0; y <= y1; ++y)
      for (auto x = x0; x <= x1; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
        const bool centre = y == static_cast<std::ptrdiff_t>(std::floor(cy)) && x == static_cast<std::ptrdiff_t>(std::floor(cx));
        if (centre || dy * dy + dx * dx <= r * r) set(y, x);
      }
  }

  void segment(double y0, double x0, double y1, double x1, double width) {
    const int n = std::max(1, static_cast<int>(std::ceil(std::hypot(y1 - y0, x1 - x0) * 4)));
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      stamp(y0 + t * (y1 - y0), x0 + t * (x1 - x0), width);
    }
  }

  void arc(double cy, double cx, double radius, double start, double sweep, double width) {
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(sweep) * radius * 4)));
    for (int i = 0; i <= n; ++i) {
      const double a = start + sweep * i / n;
      stamp(cy + radius * std::sin(a), cx + radius * std::cos(a), width);
    }
  }

  BinaryImage image() const {
    std::vector<std::uint8_t> px(ink_.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = ink_[i] ? BinaryImage::kForeground : BinaryImage::kBackground;
    return BinaryImage(h_, w_, std::move(px));
  }

 private:
  void set(std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h_) || x >= static_cast<std::ptrdiff_t>(w_)) return;
    ink_[static_cast<std::size_t>(y) * w_ + static_cast<std::size_t>(x)] = 1;
  }

  std::size_t h_, w_;
  std::vector<std::uint8_t> ink_;
};

// Glyphs of 2-3 strokes in a box up to 0.9 glyph heights wide, laid out in
// text lines.
BinaryImage render_strokes(const SynthSpec& spec) {
  auto rng = stream(spec.seed, kStrokes);
  Canvas canvas(spec.height, spec.width);
  const double line_height = std::clamp(static_cast<double>(spec.height) / 4.0, 10.0, 24.0);
  const double glyph_h = line_height * 0.6;
  const double advance = glyph_h * 0.9 / spec.stroke_density;
  std::uniform_int_distribution<int> stroke_count(2, 3), kind(0, 2);
  // one pen per page
  const double width = std::uniform_int_distribution<int>(1, 3)(rng);

  for (double base = line_height * 0.8; base < static_cast<double>(spec.height); base += line_height) {
    double x = uniform(rng, 1.0, advance);
    while (x < static_cast<double>(spec.width) - 2.0) {
      const double w = glyph_h * uniform(rng, 0.5, 0.9);
      const double top = base - glyph_h;
      const int strokes = stroke_count(rng);
      for (int s = 0; s < strokes; ++s) {
        if (kind(rng) < 2) {
          canvas.segment(top + uniform(rng, 0, glyph_h), x + uniform(rng, 0, w), top + uniform(rng, 0, glyph_h),
                         x + uniform(rng, 0, w), width);
        } else {
          const double r = uniform(rng, 0.25, 0.5) * glyph_h;
          canvas.arc(top + uniform(rng, r, glyph_h - r * 0.5), x + w / 2, r, uniform(rng, 0, 2 * std::numbers::pi),
                     uniform(rng, 0.5, 1.5) * std::numbers::pi, width);
        }
      }
      x += w + advance * uniform(rng, 0.3, 0.8);
    }
  }
  return canvas.image();
}

// Smooth field in [0,1]: a few wide Gaussian blobs over a linear ramp,
// normalized to peak 1.
std::vector<double> stain_field(const SynthSpec& spec) {
  auto rng = stream(spec.seed, kStain);
  const auto h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  const double gy = uniform(rng, -1, 1), gx = uniform(rng, -1, 1);
  struct Blob {
    double y, x, sigma, weight;
  };
  std::vector<Blob> blobs(std::uniform_int_distribution<int>(2, 4)(rng));
  for (auto& b : blobs) {
    b = {uniform(rng, 0, h), uniform(rng, 0, w), uniform(rng, 0.2, 0.5) * std::max(h, w), uniform(rng, 0.5, 1.0)};
  }
  std::vector<double> field(spec.height * spec.width);
  double peak = 0;
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x) {
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      double v = 0.25 * (1.0 + gy * (fy / h - 0.5) + gx * (fx / w - 0.5));
      for (const auto& b : blobs) {
        const double d2 = (fy - b.y) * (fy - b.y) + (fx - b.x) * (fx - b.x);
        v += b.weight * std::exp(-d2 / (2 * b.sigma * b.sigma));
      }
      field[y * spec.width + x] = v;
      peak = std::max(peak, v);
    }
  for (auto& v : field) v /= peak;
  return field;
}

void gaussian_blur(ImageBuffer& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-(i * i) / (2 * sigma * sigma));
  for (auto& v : k) v /= total;

  const auto h = static_cast<std::ptrdiff_t>(img.height()), w = static_cast<std::ptrdiff_t>(img.width());
  const std::size_t ch = img.channels();
  ImageBuffer tmp(img.height(), img.width(), ch);
  auto pass = [&](const ImageBuffer& src, ImageBuffer& dst, bool horizontal) {
    for (std::ptrdiff_t y = 0; y < h; ++y)
      for (std::ptrdiff_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < ch; ++c) {
          double acc = 0;
          for (int i = -radius; i <= radius; ++i) {
            const auto yy = horizontal ? y : std::clamp<std::ptrdiff_t>(y + i, 0, h - 1);
            const auto xx = horizontal ? std::clamp<std::ptrdiff_t>(x + i, 0, w - 1) : x;
            acc += k[i + radius] * src.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c);
          }
          dst.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = static_cast<float>(acc);
        }
  };
  pass(img, tmp, true);
  pass(tmp, img, false);
}

}  // namespace

void SynthSpec::validate() const {
  auto unit = [](double v) { return v >= 0 && v <= 1; };
  if (height < 8 || width < 8) throw ContractError("synthetic canvas must be at least 8x8");
  if (!(stroke_density > 0 && stroke_density <= 10)) throw ContractError("stroke density must lie in (0,10]");
  if (!unit(stain)) throw ContractError("stain amplitude must lie in [0,1]");
  if (!unit(salt_pepper)) throw ContractError("salt-pepper rate must lie in [0,1]");
  if (!unit(bleed)) throw ContractError("bleed-through opacity must lie in [0,1]");
  if (!(blur >= 0 && blur <= 16)) throw ContractError("blur sigma must lie in [0,16]");
}

SynthPair synthesize_pair(const SynthSpec& spec) {
  spec.validate();
  const BinaryImage clean = render_strokes(spec);
  const std::size_t h = spec.height, w = spec.width;

  std::vector<double> gray(h * w);
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = clean.values()[i];

  if (spec.bleed > 0) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (clean.is_foreground(y, w - 1 - x)) gray[y * w + x] *= 1.0 - spec.bleed;
      }
  }

  // yellowed paper: the stain darkens blue most
  constexpr std::array<double, 3> kTint = {0.6, 0.8, 1.0};
  ImageBuffer degraded(h, w, 3);
  const std::vector<double> field = spec.stain > 0 ? stain_field(spec) : std::vector<double>(h * w, 0.0);
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      degraded.values()[i * 3 + c] = static_cast<float>(gray[i] * (1.0 - spec.stain * field[i] * kTint[c]));
    }

  if (spec.blur > 0) gaussian_blur(degraded, spec.blur);

  if (spec.salt_pepper > 0) {
    auto rng = stream(spec.seed, kNoise);
    std::bernoulli_distribution flip(spec.salt_pepper);
    for (std::size_t i = 0; i < h * w; ++i) {
      if (!flip(rng)) continue;
      for (std::size_t c = 0; c < 3; ++c) degraded.values()[i * 3 + c] = 1.0f - degraded.values()[i * 3 + c];
    }
  }
  return {std::move(degraded), clean};
}

DatasetManifest write_synthetic_dataset(const std::filesystem::path& out, std::size_t count, const SynthSpec& spec) {
  spec.validate();
  const auto ddir = out / "degraded", gdir = out / "gt";
  std::filesystem::create_directories(ddir);
  std::filesystem::create_directories(gdir);
  DatasetManifest m{out, "train", {}};
  for (std::size_t i = 0; i < count; ++i) {
    SynthSpec s = spec;
    s.seed = spec.seed + i;
    const SynthPair pair = synthesize_pair(s);
    char stem[32];
    std::snprintf(stem, sizeof stem, "synth_%04zu", i);
    DatasetPair p{ddir / (std::string(stem) + ".ppm"), gdir / (std::string(stem) + ".pgm")};
    save_image(p.degraded, pair.degraded);
    save_image(p.gt, pair.clean);
    m.pairs.push_back(std::move(p));
  }
  return m;
}

}  // namespace docentr::data_io
