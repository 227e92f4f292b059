#pragma once

#include <optional>

#include "docentr/image.hpp"
#include "docentr/model.hpp"

namespace docentr::pipeline {

/// Full-page enhancement: pad to the window grid, run every window through
/// the model, stitch the overlapping outputs and crop back to the input size.
/// Returns a 1-channel image in [0,1].
ImageBuffer enhance(const ImageBuffer& page, const model::ModelWeights& weights, std::size_t stride = 0,
                    std::size_t batch = 8);

/// enhance followed by thresholding (value <= threshold is ink).
BinaryImage binarize_page(const ImageBuffer& page, const model::ModelWeights& weights, double threshold = 0.5,
                          std::size_t stride = 0);

}  // namespace docentr::pipeline
