#include "docentr/patching.hpp"

#include <algorithm>
#include <string>

#include "docentr/error.hpp"

namespace docentr::patching {

namespace {

std::size_t padded_extent(std::size_t extent, std::size_t window, std::size_t stride) {
  if (extent <= window) return window;
  const std::size_t steps = (extent - window + stride - 1) / stride;
  return window + steps * stride;
}

std::vector<std::size_t> starts(std::size_t padded, std::size_t window, std::size_t stride) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s + window <= padded; s += stride) out.push_back(s);
  return out;
}

}  // namespace

std::pair<std::size_t, std::size_t> WindowGrid::origin(std::size_t i) const {
  if (i >= window_count()) throw ContractError("window index " + std::to_string(i) + " out of range");
  return {row_starts[i / col_starts.size()], col_starts[i % col_starts.size()]};
}

WindowGrid make_grid(std::size_t height, std::size_t width, std::size_t window_size, std::size_t stride) {
  if (window_size < 2 || window_size % 2 != 0) {
    throw ContractError("window size must be even and at least 2, got " + std::to_string(window_size));
  }
  if (stride == 0) stride = window_size / 2;
  if (stride > window_size) throw ContractError("stride larger than the window leaves gaps");
  WindowGrid g;
  g.window_size = window_size;
  g.stride = stride;
  g.height = height;
  g.width = width;
  g.padded_height = padded_extent(height, window_size, stride);
  g.padded_width = padded_extent(width, window_size, stride);
  g.row_starts = starts(g.padded_height, window_size, stride);
  g.col_starts = starts(g.padded_width, window_size, stride);
  return g;
}

std::pair<ImageBuffer, WindowGrid> pad_to_grid(const ImageBuffer& img, std::size_t window_size, std::size_t stride) {
  WindowGrid grid = make_grid(img.height(), img.width(), window_size, stride);
  ImageBuffer padded(grid.padded_height, grid.padded_width, img.channels(), 1.0f);
  const std::size_t row = img.width() * img.channels();
  for (std::size_t y = 0; y < img.height(); ++y) {
    std::copy_n(img.values().begin() + static_cast<std::ptrdiff_t>(y * row), row,
                padded.values().begin() + static_cast<std::ptrdiff_t>(y * grid.padded_width * img.channels()));
  }
  return {std::move(padded), std::move(grid)};
}

std::vector<ImageBuffer> extract_windows(const ImageBuffer& padded, const WindowGrid& grid) {
  if (padded.height() != grid.padded_height || padded.width() != grid.padded_width) {
    throw DimensionError("padded image " + std::to_string(padded.height()) + "x" + std::to_string(padded.width()) +
                         " does not match grid " + std::to_string(grid.padded_height) + "x" +
                         std::to_string(grid.padded_width));
  }
  const std::size_t s = grid.window_size;
  const std::size_t c = padded.channels();
  std::vector<ImageBuffer> out;
  out.reserve(grid.window_count());
  for (std::size_t i = 0; i < grid.window_count(); ++i) {
    auto [r0, c0] = grid.origin(i);
    ImageBuffer w(s, s, c);
    for (std::size_t y = 0; y < s; ++y) {
      auto src = padded.values().begin() + static_cast<std::ptrdiff_t>(((r0 + y) * padded.width() + c0) * c);
      std::copy_n(src, s * c, w.values().begin() + static_cast<std::ptrdiff_t>(y * s * c));
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<std::size_t> coverage(const WindowGrid& grid) {
  std::vector<std::size_t> count(grid.padded_height * grid.padded_width, 0);
  for (std::size_t i = 0; i < grid.window_count(); ++i) {
    auto [r0, c0] = grid.origin(i);
    for (std::size_t y = 0; y < grid.window_size; ++y)
      for (std::size_t x = 0; x < grid.window_size; ++x) ++count[(r0 + y) * grid.padded_width + c0 + x];
  }
  return count;
}

ImageBuffer stitch_windows(std::span<const ImageBuffer> windows, const WindowGrid& grid) {
  if (windows.size() != grid.window_count()) {
    throw DimensionError("expected " + std::to_string(grid.window_count()) + " windows, got " +
                         std::to_string(windows.size()));
  }
  const std::size_t s = grid.window_size;
  const std::size_t c = windows.front().channels();
  for (const auto& w : windows) {
    if (w.height() != s || w.width() != s || w.channels() != c) throw DimensionError("window size mismatch");
  }
  std::vector<double> sum(grid.padded_height * grid.padded_width * c, 0.0);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    auto [r0, c0] = grid.origin(i);
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x)
        for (std::size_t k = 0; k < c; ++k) sum[((r0 + y) * grid.padded_width + c0 + x) * c + k] += windows[i].at(y, x, k);
  }
  const auto count = coverage(grid);
  ImageBuffer out(grid.height, grid.width, c);
  for (std::size_t y = 0; y < grid.height; ++y)
    for (std::size_t x = 0; x < grid.width; ++x) {
      const std::size_t p = y * grid.padded_width + x;
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = static_cast<float>(sum[p * c + k] / count[p]);
    }
  out.clamp();
  return out;
}

PatchSequence tokenize_window(const ImageBuffer& window, std::size_t patch_size) {
  const std::size_t s = window.height();
  if (window.width() != s) throw DimensionError("window must be square");
  if (patch_size == 0 || s % patch_size != 0) {
    throw DimensionError("window size " + std::to_string(s) + " is not divisible by patch size " +
                         std::to_string(patch_size));
  }
  const std::size_t p = patch_size;
  const std::size_t c = window.channels();
  const std::size_t grid = s / p;
  const std::size_t len = p * p * c;
  numerics::Tensor tokens({grid * grid, len});
  for (std::size_t py = 0; py < grid; ++py)
    for (std::size_t px = 0; px < grid; ++px) {
      float* row = tokens.data() + (py * grid + px) * len;
      for (std::size_t y = 0; y < p; ++y) {
        auto src = window.values().begin() + static_cast<std::ptrdiff_t>(((py * p + y) * s + px * p) * c);
        std::copy_n(src, p * c, row + y * p * c);
      }
    }
  return PatchSequence{std::move(tokens), p, s, c};
}

ImageBuffer detokenize(const PatchSequence& seq) {
  const std::size_t p = seq.patch_size;
  const std::size_t s = seq.window_size;
  const std::size_t c = seq.channels;
  if (p == 0 || s % p != 0 || seq.tokens.rank() != 2 || seq.token_count() != (s / p) * (s / p) ||
      seq.token_length() != p * p * c) {
    throw DimensionError("token matrix " + numerics::to_string(seq.tokens.shape()) + " inconsistent with window " +
                         std::to_string(s) + ", patch " + std::to_string(p) + ", channels " + std::to_string(c));
  }
  const std::size_t grid = s / p;
  const std::size_t len = p * p * c;
  ImageBuffer out(s, s, c);
  for (std::size_t py = 0; py < grid; ++py)
    for (std::size_t px = 0; px < grid; ++px) {
      const float* row = seq.tokens.data() + (py * grid + px) * len;
      for (std::size_t y = 0; y < p; ++y) {
        std::copy_n(row + y * p * c, p * c,
                    out.values().begin() + static_cast<std::ptrdiff_t>(((py * p + y) * s + px * p) * c));
      }
    }
  return out;
}

}  // namespace docentr::patching
