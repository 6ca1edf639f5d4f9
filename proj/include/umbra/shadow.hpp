#pragma once

// Shadow synthesis: inside polygon ∩ mask, L* is multiplied by the shadow
// coefficient k while a* and b* are held fixed. Everything outside the
// region is copied byte for byte.

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "umbra/color.hpp"
#include "umbra/error.hpp"
#include "umbra/geometry.hpp"
#include "umbra/image.hpp"

namespace umbra {

// Mean L ratio of shadowed to lit regions measured on SBU Shadow.
inline constexpr double kDefaultShadowCoefficient = 0.43;

// Sweep grid for k: 0.20, 0.25, ..., 0.70 with the 0.43 default inserted.
inline constexpr std::array<double, 12> kCoefficientGrid{0.20, 0.25, 0.30, 0.35, 0.40, 0.43,
                                                         0.45, 0.50, 0.55, 0.60, 0.65, 0.70};

inline void validate_coefficient(double k) {
  if (!(k > 0.0 && k <= 1.0)) throw std::invalid_argument("shadow coefficient must lie in (0, 1]");
}

struct ShadowSpec {
  Polygon polygon;
  double k{kDefaultShadowCoefficient};
  RegionMask mask;

  void validate() const {
    validate_coefficient(k);
    if (polygon.size() < 3) throw std::invalid_argument("shadow polygon needs at least 3 vertices");
  }
};

// An image with its Lab values cached, for repeated shadow synthesis on the
// same source (one render per optimizer evaluation). The fully shadowed
// pixels are kept per coefficient, so a render is a rasterization plus a copy.
class ShadowCanvas {
 public:
  explicit ShadowCanvas(Image source) : source_(std::move(source)) {
    lab_.reserve(source_.pixel_count());
    for (int y = 0; y < source_.height(); ++y)
      for (int x = 0; x < source_.width(); ++x) lab_.push_back(rgb_to_lab(source_.at(x, y)));
  }

  const Image& source() const noexcept { return source_; }
  const LabPixel& lab(int x, int y) const noexcept {
    return lab_[static_cast<std::size_t>(y) * source_.width() + x];
  }

  Image render(const Polygon& polygon, double k, const RegionMask& mask) const {
    validate_coefficient(k);
    if (!mask.matches(source_)) throw std::invalid_argument("mask size differs from image size");
    Image out = source_;
    if (k == 1.0) return out;
    const RegionMask region = rasterize(polygon, mask);
    const auto dark = shaded(k);
    for (int y = 0; y < source_.height(); ++y) {
      for (int x = 0; x < source_.width(); ++x) {
        if (region.at(x, y)) out.set(x, y, (*dark)[static_cast<std::size_t>(y) * source_.width() + x]);
      }
    }
    return out;
  }

 private:
  using Pixels = std::shared_ptr<const std::vector<RgbPixel>>;

  Pixels shaded(double k) const {
    const std::lock_guard lock(mutex_);
    if (auto it = shaded_.find(k); it != shaded_.end()) return it->second;
    if (shaded_.size() >= 64) shaded_.clear();
    auto px = std::make_shared<std::vector<RgbPixel>>();
    px->reserve(lab_.size());
    for (LabPixel p : lab_) {
      p.l *= k;
      px->push_back(lab_to_rgb(p));
    }
    return shaded_.emplace(k, std::move(px)).first->second;
  }

  Image source_;
  std::vector<LabPixel> lab_;
  mutable std::mutex mutex_;
  mutable std::map<double, Pixels> shaded_;
};

inline Image apply_shadow(const Image& x, const Polygon& polygon, double k, const RegionMask& mask) {
  validate_coefficient(k);
  if (!mask.matches(x)) throw std::invalid_argument("mask size differs from image size");
  Image out = x;
  if (k == 1.0) return out;
  const RegionMask region = rasterize(polygon, mask);
  for (int y = 0; y < x.height(); ++y) {
    for (int c = 0; c < x.width(); ++c) {
      if (!region.at(c, y)) continue;
      LabPixel p = rgb_to_lab(x.at(c, y));
      p.l *= k;
      out.set(c, y, lab_to_rgb(p));
    }
  }
  return out;
}

inline Image apply_shadow(const Image& x, const ShadowSpec& spec) {
  spec.validate();
  return apply_shadow(x, spec.polygon, spec.k, spec.mask);
}

// Mean L* (0..100) over the region. Throws on an empty region.
inline double mean_lightness(const Image& img, const RegionMask& region) {
  if (!region.matches(img)) throw std::invalid_argument("mask size differs from image size");
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!region.at(x, y)) continue;
      sum += rgb_to_lab(img.at(x, y)).l;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("empty region");
  return sum / static_cast<double>(n);
}

// Ratio of region-mean lightness, shadowed over clean, clamped to (0, 1].
inline double estimate_k(const Image& clean, const Image& shadowed, const RegionMask& region) {
  if (clean.width() != shadowed.width() || clean.height() != shadowed.height())
    throw std::invalid_argument("clean and shadowed images differ in size");
  const double lit = mean_lightness(clean, region);
  if (lit <= 0.0) throw std::domain_error("clean region has zero lightness");
  const double dark = mean_lightness(shadowed, region);
  return std::clamp(dark / lit, 1e-6, 1.0);
}

}  // namespace umbra
