#include "docentr/pipeline.hpp"

#include "docentr/error.hpp"
#include "docentr/metrics.hpp"
#include "docentr/patching.hpp"

namespace docentr::pipeline {

ImageBuffer enhance(const ImageBuffer& page, const model::ModelWeights& weights, std::size_t stride,
                    std::size_t batch) {
  const auto& cfg = weights.config;
  if (page.channels() != 1 && page.channels() != cfg.in_channels) {
    throw DimensionError("image has " + std::to_string(page.channels()) + " channels but the model expects " +
                         std::to_string(cfg.in_channels));
  }
  auto [padded, grid] = patching::pad_to_grid(page, cfg.window_size, stride);
  const auto windows = patching::extract_windows(padded, grid);
  const auto outputs = model::forward_windows(windows, weights, batch);
  return patching::stitch_windows(outputs, grid);
}

BinaryImage binarize_page(const ImageBuffer& page, const model::ModelWeights& weights, double threshold,
                          std::size_t stride) {
  return metrics::binarize(enhance(page, weights, stride), threshold);
}

}  // namespace docentr::pipeline
