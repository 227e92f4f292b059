#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace docentr {

/// H x W x C raster of floats in [0,1], row-major with interleaved channels.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f);
  ImageBuffer(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }
  bool empty() const noexcept { return data_.empty(); }

  float& at(std::size_t y, std::size_t x, std::size_t c = 0) { return data_[(y * width_ + x) * channels_ + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c = 0) const { return data_[(y * width_ + x) * channels_ + c]; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  bool same_geometry(const ImageBuffer& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  /// Clamps every value into [0,1].
  void clamp();

  /// Mean over channels.
  ImageBuffer to_gray() const;
  /// Grayscale copied into `channels` identical planes; multi-channel input is returned as is.
  ImageBuffer replicate(std::size_t channels) const;
  /// Top-left `height` x `width` region.
  ImageBuffer crop(std::size_t height, std::size_t width) const;

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

/// Two-level image: 0 is foreground (ink), 1 is background (paper).
class BinaryImage {
 public:
  static constexpr std::uint8_t kForeground = 0;
  static constexpr std::uint8_t kBackground = 1;

  BinaryImage() = default;
  BinaryImage(std::size_t height, std::size_t width, std::uint8_t fill = kBackground);
  BinaryImage(std::size_t height, std::size_t width, std::vector<std::uint8_t> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::uint8_t& at(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }
  bool is_foreground(std::size_t y, std::size_t x) const { return at(y, x) == kForeground; }

  std::span<const std::uint8_t> values() const noexcept { return data_; }
  std::size_t foreground_count() const noexcept;

  /// 1-channel float image with 0.0 for ink and 1.0 for paper.
  ImageBuffer to_image() const;

  friend bool operator==(const BinaryImage&, const BinaryImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> data_;
};

}  // namespace docentr
