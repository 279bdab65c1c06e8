#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "headsynth/common.hpp"

namespace headsynth {

// Row-major, channel-last float image; row 0 is the top of the picture.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    require(width > 0 && height > 0 && channels > 0, "Image: dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
  std::span<float> pixel(std::size_t p) { return {data_.data() + p * channels_, static_cast<std::size_t>(channels_)}; }
  std::span<const float> pixel(std::size_t p) const {
    return {data_.data() + p * channels_, static_cast<std::size_t>(channels_)};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }
  bool operator==(const Image&) const = default;

  // Copy of channels [first, first + count).
  Image channel_slice(int first, int count) const;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const Image& rgb, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

// Little-endian portable float map. One channel is written as "Pf", three
// as "PF". Other channel counts are stored as a "Pf" image of height H * C
// whose band c (rows c*H .. c*H + H - 1) holds channel c.
void write_pfm(const Image& image, const std::filesystem::path& path);
// `channels` recovers the stacking of multi-channel single-band files.
Image read_pfm(const std::filesystem::path& path, int channels = 0);

}  // namespace headsynth
