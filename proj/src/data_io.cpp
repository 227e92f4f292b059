#include "docentr/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "docentr/error.hpp"
#include "docentr/patching.hpp"

namespace docentr::data_io {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Netpbm header token reader: whitespace separated, '#' comments to end of line.
class HeaderScanner {
 public:
  explicit HeaderScanner(const std::string& bytes) : b_(bytes) {}

  std::size_t number(const char* what) {
    skip();
    std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      if (v > (1u << 30)) throw FormatError(std::string("netpbm ") + what + " is implausibly large");
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("netpbm header: expected ") + what);
    return v;
  }

  /// Consumes the single whitespace byte that separates header and raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      throw FormatError("netpbm header: missing separator before raster");
    }
    return pos_ + 1;
  }

  void skip_to(std::size_t p) { pos_ = p; }

 private:
  void skip() {
    while (pos_ < b_.size()) {
      const char c = b_[pos_];
      if (c == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  std::size_t pos_ = 0;
};

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm";
}

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("missing dataset directory " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    const std::string stem = entry.path().stem().string();
    if (!out.emplace(stem, entry.path()).second) {
      throw FormatError("ambiguous stem '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

}  // namespace

ImageBuffer decode_netpbm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("unsupported image format: expected binary PGM (P5) or PPM (P6)");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderScanner scan(bytes);
  scan.skip_to(2);
  const std::size_t width = scan.number("width");
  const std::size_t height = scan.number("height");
  const std::size_t maxval = scan.number("maxval");
  if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (width == 0 || height == 0) throw FormatError("netpbm image with zero size");
  const std::size_t start = scan.raster_start();
  const std::size_t n = width * height * channels;
  if (bytes.size() < start + n) {
    throw FormatError("truncated netpbm payload: expected " + std::to_string(n) + " bytes, found " +
                      std::to_string(bytes.size() - std::min(bytes.size(), start)));
  }
  std::vector<float> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = static_cast<float>(static_cast<unsigned char>(bytes[start + i])) / 255.0f;
  return ImageBuffer(height, width, channels, std::move(px));
}

ImageBuffer load_image(const fs::path& path) {
  try {
    return decode_netpbm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string encode_netpbm(const ImageBuffer& img) {
  if (img.channels() != 1 && img.channels() != 3) throw DimensionError("netpbm needs 1 or 3 channels");
  std::string out = (img.channels() == 1 ? "P5\n" : "P6\n") + std::to_string(img.width()) + " " +
                    std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + img.values().size());
  for (float v : img.values()) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  return out;
}

void save_image(const fs::path& path, const ImageBuffer& img) { write_file(path, encode_netpbm(img)); }

void save_image(const fs::path& path, const BinaryImage& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  for (auto v : img.values()) out.push_back(static_cast<char>(v == BinaryImage::kForeground ? 0 : 255));
  write_file(path, out);
}

BinaryImage to_binary_gt(const ImageBuffer& img) {
  const ImageBuffer g = img.to_gray();
  std::vector<std::uint8_t> px(g.pixel_count());
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = g.values()[i] <= 0.5f ? BinaryImage::kForeground : BinaryImage::kBackground;
  }
  return BinaryImage(g.height(), g.width(), std::move(px));
}

DatasetManifest scan_dataset(const fs::path& root, std::string split) {
  const auto degraded = images_by_stem(root / "degraded");
  const auto gt = images_by_stem(root / "gt");
  DatasetManifest m{root, std::move(split), {}};
  for (const auto& [stem, path] : degraded) {
    auto it = gt.find(stem);
    if (it == gt.end()) throw FormatError("degraded image '" + stem + "' has no ground truth in " + (root / "gt").string());
    m.pairs.push_back({path, it->second});
  }
  for (const auto& [stem, path] : gt) {
    if (!degraded.count(stem)) {
      throw FormatError("ground truth '" + stem + "' has no degraded image in " + (root / "degraded").string());
    }
  }
  return m;
}

DatasetManifest read_manifest(const fs::path& path, std::string split) {
  std::istringstream in(read_file(path));
  DatasetManifest m{path.parent_path(), std::move(split), {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected degraded<TAB>gt");
    }
    fs::path d = line.substr(0, tab), g = line.substr(tab + 1);
    if (d.is_relative()) d = m.root / d;
    if (g.is_relative()) g = m.root / g;
    m.pairs.push_back({d, g});
  }
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::string out;
  for (const auto& p : manifest.pairs) out += p.degraded.string() + "\t" + p.gt.string() + "\n";
  write_file(path, out);
}

DatasetManifest open_dataset(const fs::path& path, std::string split) {
  if (fs::is_directory(path)) return scan_dataset(path, std::move(split));
  return read_manifest(path, std::move(split));
}

std::vector<training::WindowPair> window_pairs(const ImageBuffer& degraded, const BinaryImage& gt,
                                               std::size_t window_size, std::size_t stride) {
  if (degraded.height() != gt.height() || degraded.width() != gt.width()) {
    throw DimensionError("pair size mismatch: degraded " + std::to_string(degraded.height()) + "x" +
                         std::to_string(degraded.width()) + ", ground truth " + std::to_string(gt.height()) + "x" +
                         std::to_string(gt.width()));
  }
  auto [pd, grid] = patching::pad_to_grid(degraded, window_size, stride);
  auto [pg, grid_gt] = patching::pad_to_grid(gt.to_image(), window_size, stride);
  auto dw = patching::extract_windows(pd, grid);
  auto gw = patching::extract_windows(pg, grid_gt);
  std::vector<training::WindowPair> out;
  out.reserve(dw.size());
  for (std::size_t i = 0; i < dw.size(); ++i) out.push_back({std::move(dw[i]), std::move(gw[i])});
  return out;
}

std::vector<training::WindowPair> build_window_dataset(const DatasetManifest& manifest, std::size_t window_size,
                                                       std::size_t stride) {
  std::vector<training::WindowPair> out;
  for (const auto& pair : manifest.pairs) {
    const ImageBuffer degraded = load_image(pair.degraded);
    const BinaryImage gt = to_binary_gt(load_image(pair.gt));
    try {
      for (auto& w : window_pairs(degraded, gt, window_size, stride)) out.push_back(std::move(w));
    } catch (const DimensionError& e) {
      throw DimensionError(pair.degraded.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace docentr::data_io
