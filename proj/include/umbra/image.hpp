#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "umbra/color.hpp"

namespace umbra {

// 8-bit RGB raster, row-major, channels interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height, RgbPixel fill = {})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative image size");
    pixels_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  RgbPixel at(int x, int y) const noexcept {
    const std::size_t i = offset(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }

  void set(int x, int y, RgbPixel p) noexcept {
    const std::size_t i = offset(x, y);
    pixels_[i] = p.r;
    pixels_[i + 1] = p.g;
    pixels_[i + 2] = p.b;
  }

  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> bytes() noexcept { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_{0};
  int height_{0};
  std::vector<std::uint8_t> pixels_;
};

// Boolean H x W grid marking the target object.
class RegionMask {
 public:
  RegionMask() = default;
  RegionMask(int width, int height, bool value = false)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(width) * height, value ? 1 : 0) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative mask size");
  }

  static RegionMask full(int width, int height) { return {width, height, true}; }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool at(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v) noexcept { bits_[index(x, y)] = v ? 1 : 0; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  bool matches(const Image& img) const noexcept {
    return width_ == img.width() && height_ == img.height();
  }

  friend bool operator==(const RegionMask&, const RegionMask&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_{0};
  int height_{0};
  std::vector<std::uint8_t> bits_;
};

// One labeled image with its object mask.
struct Sample {
  Image image;
  std::size_t label{0};
  RegionMask mask;
};

}  // namespace umbra
