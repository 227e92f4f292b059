#include "docentr/image.hpp"

#include <algorithm>
#include <string>

#include "docentr/error.hpp"

namespace docentr {

namespace {

void check_geometry(std::size_t height, std::size_t width, std::size_t channels) {
  if (height == 0 || width == 0) throw DimensionError("image dimensions must be positive");
  if (channels != 1 && channels != 3) {
    throw DimensionError("unsupported channel count " + std::to_string(channels));
  }
}

}  // namespace

ImageBuffer::ImageBuffer(std::size_t height, std::size_t width, std::size_t channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  check_geometry(height, width, channels);
  data_.assign(height * width * channels, fill);
}

ImageBuffer::ImageBuffer(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_geometry(height, width, channels);
  if (data_.size() != height * width * channels) {
    throw DimensionError("image of " + std::to_string(height) + "x" + std::to_string(width) + "x" +
                         std::to_string(channels) + " needs " + std::to_string(height * width * channels) +
                         " values, got " + std::to_string(data_.size()));
  }
}

void ImageBuffer::clamp() {
  for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

ImageBuffer ImageBuffer::to_gray() const {
  if (channels_ == 1) return *this;
  ImageBuffer out(height_, width_, 1);
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    float s = 0;
    for (std::size_t c = 0; c < channels_; ++c) s += data_[i * channels_ + c];
    out.data_[i] = s / static_cast<float>(channels_);
  }
  return out;
}

ImageBuffer ImageBuffer::replicate(std::size_t channels) const {
  if (channels_ == channels) return *this;
  if (channels_ != 1) {
    throw DimensionError("cannot expand a " + std::to_string(channels_) + "-channel image to " +
                         std::to_string(channels));
  }
  ImageBuffer out(height_, width_, channels);
  for (std::size_t i = 0; i < pixel_count(); ++i)
    for (std::size_t c = 0; c < channels; ++c) out.data_[i * channels + c] = data_[i];
  return out;
}

ImageBuffer ImageBuffer::crop(std::size_t height, std::size_t width) const {
  if (height > height_ || width > width_) throw DimensionError("crop larger than image");
  ImageBuffer out(height, width, channels_);
  for (std::size_t y = 0; y < height; ++y) {
    auto src = data_.begin() + static_cast<std::ptrdiff_t>(y * width_ * channels_);
    std::copy(src, src + static_cast<std::ptrdiff_t>(width * channels_),
              out.data_.begin() + static_cast<std::ptrdiff_t>(y * width * channels_));
  }
  return out;
}

BinaryImage::BinaryImage(std::size_t height, std::size_t width, std::uint8_t fill)
    : height_(height), width_(width) {
  if (height == 0 || width == 0) throw DimensionError("image dimensions must be positive");
  if (fill > 1) throw ContractError("binary image values must be 0 or 1");
  data_.assign(height * width, fill);
}

BinaryImage::BinaryImage(std::size_t height, std::size_t width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height == 0 || width == 0) throw DimensionError("image dimensions must be positive");
  if (data_.size() != height * width) throw DimensionError("binary image payload does not match dimensions");
  for (auto v : data_)
    if (v > 1) throw ContractError("binary image values must be 0 or 1");
}

std::size_t BinaryImage::foreground_count() const noexcept {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), kForeground));
}

ImageBuffer BinaryImage::to_image() const {
  std::vector<float> px(data_.begin(), data_.end());
  return ImageBuffer(height_, width_, 1, std::move(px));
}

}  // namespace docentr
