#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "docentr/image.hpp"
#include "docentr/training.hpp"

namespace docentr::data_io {

/// Decodes binary PGM (P5) and PPM (P6) with maxval 255; samples map to v/255.
ImageBuffer load_image(const std::filesystem::path& path);
ImageBuffer decode_netpbm(const std::string& bytes);

/// P5 for one channel, P6 for three; samples are round(v * 255).
void save_image(const std::filesystem::path& path, const ImageBuffer& img);
/// P5 with ink 0 and paper 255.
void save_image(const std::filesystem::path& path, const BinaryImage& img);
std::string encode_netpbm(const ImageBuffer& img);

/// Mean over channels, then value <= 0.5 is ink.
BinaryImage to_binary_gt(const ImageBuffer& img);

struct DatasetPair {
  std::filesystem::path degraded;
  std::filesystem::path gt;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string split = "train";
  std::vector<DatasetPair> pairs;
};

/// Pairs `root/degraded/<stem>.(pgm|ppm)` with `root/gt/<stem>.(pgm|ppm)`.
/// Fails when a file has no partner. Pairs are sorted by stem.
DatasetManifest scan_dataset(const std::filesystem::path& root, std::string split = "train");

/// One `degraded_path<TAB>gt_path` line per pair; relative paths resolve
/// against the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& path, std::string split = "train");
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// A directory is scanned, a regular file is read as a manifest.
DatasetManifest open_dataset(const std::filesystem::path& path, std::string split = "train");

/// Pads both members of every pair identically, cuts aligned windows and
/// reduces the clean windows to one binary channel.
std::vector<training::WindowPair> build_window_dataset(const DatasetManifest& manifest, std::size_t window_size,
                                                       std::size_t stride = 0);
std::vector<training::WindowPair> window_pairs(const ImageBuffer& degraded, const BinaryImage& gt,
                                               std::size_t window_size, std::size_t stride = 0);

/// Parameters of the synthetic degradation generator. Intensities of 0
/// disable the corresponding effect.
struct SynthSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  double stroke_density = 1.0;  // glyphs per 100 px of text line
  double stain = 0.0;           // peak darkening of the low-frequency stain, [0,1]
  double salt_pepper = 0.0;     // probability of inverting a pixel, [0,1]
  double blur = 0.0;            // Gaussian sigma in pixels
  double bleed = 0.0;           // opacity of the mirrored back-side text, [0,1]
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthPair {
  ImageBuffer degraded;  // 3 channels
  BinaryImage clean;
};

/// Renders text-like strokes (segments and arcs, 1-3 px wide) on white paper
/// and degrades a copy with stain, bleed-through, blur and impulse noise, in
/// that order.
SynthPair synthesize_pair(const SynthSpec& spec);


/// Writes `count` pairs as `out/{degraded,gt}/synth_<i>.(ppm|pgm)`; pair i
/// uses seed `spec.seed + i`. Returns the written manifest.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& out, std::size_t count, const SynthSpec& spec);

}  // namespace docentr::data_io
