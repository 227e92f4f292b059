#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "docentr/image.hpp"
#include "docentr/numerics/tensor.hpp"

namespace docentr::patching {

/// Geometry of square windows laid over a padded image. Windows start at
/// multiples of `stride` (half the window by default) so that neighbours
/// overlap by half a window in each direction.
struct WindowGrid {
  std::size_t window_size = 0;
  std::size_t stride = 0;
  std::size_t height = 0;  // original
  std::size_t width = 0;
  std::size_t padded_height = 0;
  std::size_t padded_width = 0;
  std::vector<std::size_t> row_starts;
  std::vector<std::size_t> col_starts;

  std::size_t window_count() const noexcept { return row_starts.size() * col_starts.size(); }
  /// Origin (row, col) of window `i` in row-major order.
  std::pair<std::size_t, std::size_t> origin(std::size_t i) const;
};

/// Grid for an image of the given size. `stride` 0 selects window_size / 2.
WindowGrid make_grid(std::size_t height, std::size_t width, std::size_t window_size, std::size_t stride = 0);

/// Pads right and bottom with white (1.0) up to the grid size.
std::pair<ImageBuffer, WindowGrid> pad_to_grid(const ImageBuffer& img, std::size_t window_size,
                                               std::size_t stride = 0);

std::vector<ImageBuffer> extract_windows(const ImageBuffer& padded, const WindowGrid& grid);

/// Averages overlapping windows back into one image, crops to the original
/// size and clamps to [0,1].
ImageBuffer stitch_windows(std::span<const ImageBuffer> windows, const WindowGrid& grid);

/// Number of windows covering each pixel of the padded image.
std::vector<std::size_t> coverage(const WindowGrid& grid);

/// A window cut into p x p patches, one flattened patch per row.
struct PatchSequence {
  numerics::Tensor tokens;  // [N, p*p*C]
  std::size_t patch_size = 0;
  std::size_t window_size = 0;
  std::size_t channels = 0;

  std::size_t token_count() const { return tokens.dim(0); }
  std::size_t token_length() const { return tokens.dim(1); }
};

/// Patches in row-major order over the window; each row is the patch
/// flattened in (y, x, channel) order.
PatchSequence tokenize_window(const ImageBuffer& window, std::size_t patch_size);

/// Exact inverse of tokenize_window.
ImageBuffer detokenize(const PatchSequence& seq);

}  // namespace docentr::patching
