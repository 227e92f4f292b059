#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "docentr/image.hpp"

// Document binarization measures. Images use 0 for ink (foreground) and 1
// for paper (background).

namespace docentr::metrics {

inline constexpr double kDefaultThreshold = 0.5;

/// value <= threshold -> foreground (0), else background (1).
BinaryImage binarize(const ImageBuffer& gray, double threshold = kDefaultThreshold);

/// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const BinaryImage& pred, const BinaryImage& gt);

/// PSNR of continuous values against a binary reference, same formula.
double psnr(const ImageBuffer& pred, const BinaryImage& gt);

struct Confusion {
  std::size_t tp = 0;  // ink in both
  std::size_t fp = 0;  // ink in prediction only
  std::size_t fn = 0;  // ink in ground truth only
  std::size_t tn = 0;
};

Confusion confusion(const BinaryImage& pred, const BinaryImage& gt);

/// Harmonic mean of ink precision and recall, in percent.
double f_measure(const BinaryImage& pred, const BinaryImage& gt);

/// Zhang-Suen thinning of the ink to a one pixel wide skeleton. Pixels outside
/// the image count as paper.
BinaryImage thin(const BinaryImage& b);

/// F-measure whose recall is measured against the skeleton of the ground
/// truth ink.
double pseudo_f_measure(const BinaryImage& pred, const BinaryImage& gt);

/// 5x5 reciprocal-distance weights, centre 0, normalized to sum 1.
std::array<std::array<double, 5>, 5> drd_weights();

/// Non-overlapping 8x8 ground-truth blocks (edge blocks included) holding both
/// ink and paper.
std::size_t nubn(const BinaryImage& gt);

/// Distance-reciprocal distortion: the weighted ground-truth disagreement
/// around every flipped pixel, summed and divided by NUBN. The ground truth is
/// replicate-padded at the borders.
double drd(const BinaryImage& pred, const BinaryImage& gt);

struct MetricsReport {
  std::string name;
  double psnr = 0;  // dB, +infinity for a perfect match
  double fm = 0;    // percent
  double fps = 0;   // percent
  double drd = 0;
};

/// Crops the prediction to the ground truth, binarizes it and computes every
/// measure.
MetricsReport evaluate_pair(const ImageBuffer& pred_gray, const BinaryImage& gt,
                            double threshold = kDefaultThreshold);

/// Unweighted mean of each field; the result is named "MEAN".
MetricsReport corpus_mean(std::span<const MetricsReport> reports);

/// One tab-separated line per report ("name psnr fm fps drd", four
/// decimals) followed by the MEAN line.
void write_report(std::ostream& out, std::span<const MetricsReport> reports);
std::string format_report_line(const MetricsReport& r);

}  // namespace docentr::metrics
