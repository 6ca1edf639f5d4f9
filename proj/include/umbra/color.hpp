#pragma once

// sRGB <-> CIE L*a*b* (D65) conversion. Shadows are synthesized by scaling
// L* only, so this pair must round-trip every 8-bit triple exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace umbra {

struct RgbPixel {
  std::uint8_t r{0};
  std::uint8_t g{0};
  std::uint8_t b{0};

  friend constexpr bool operator==(const RgbPixel&, const RgbPixel&) = default;
};

struct LabPixel {
  double l{0.0};
  double a{0.0};
  double b{0.0};
};

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

// Linear sRGB -> XYZ, D65.
inline constexpr Mat3 kRgbToXyz{{{0.4124564, 0.3575761, 0.1804375},
                                 {0.2126729, 0.7151522, 0.0721750},
                                 {0.0193339, 0.1191920, 0.9503041}}};

constexpr Mat3 invert(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

inline constexpr Mat3 kXyzToRgb = invert(kRgbToXyz);

// Reference white is the image of linear (1,1,1), so neutral grays land on
// a = b = 0 up to rounding.
inline constexpr std::array<double, 3> kWhite{
    kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
    kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
    kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2]};

inline constexpr double kDelta = 6.0 / 29.0;

inline double srgb_decode(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double srgb_encode(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

inline const std::array<double, 256>& decode_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = srgb_decode(i / 255.0);
    return t;
  }();
  return table;
}

inline double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

inline double lab_f_inv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
}

}  // namespace detail

inline LabPixel rgb_to_lab(RgbPixel p) noexcept {
  const auto& lut = detail::decode_table();
  const double lin[3] = {lut[p.r], lut[p.g], lut[p.b]};
  double f[3];
  for (int i = 0; i < 3; ++i) {
    const auto& row = detail::kRgbToXyz[i];
    const double v = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    f[i] = detail::lab_f(v / detail::kWhite[i]);
  }
  return {116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])};
}

// Linear-light RGB (unclipped, may fall outside [0,1]) for a Lab color.
inline std::array<double, 3> lab_to_linear_rgb(const LabPixel& p) noexcept {
  const double fy = (p.l + 16.0) / 116.0;
  const double xyz[3] = {detail::lab_f_inv(fy + p.a / 500.0) * detail::kWhite[0],
                         detail::lab_f_inv(fy) * detail::kWhite[1],
                         detail::lab_f_inv(fy - p.b / 200.0) * detail::kWhite[2]};
  std::array<double, 3> lin{};
  for (int i = 0; i < 3; ++i) {
    const auto& row = detail::kXyzToRgb[i];
    lin[i] = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
  }
  return lin;
}

// Encoded sRGB on the 0..255 scale before rounding and clipping.
inline std::array<double, 3> lab_to_rgb_unclipped(const LabPixel& p) noexcept {
  auto lin = lab_to_linear_rgb(p);
  for (auto& c : lin) c = 255.0 * detail::srgb_encode(c);
  return lin;
}

// Out-of-gamut channels are rounded then clipped to [0, 255] independently.
inline RgbPixel lab_to_rgb(const LabPixel& p) noexcept {
  const auto v = lab_to_rgb_unclipped(p);
  return {detail::quantize(v[0]), detail::quantize(v[1]), detail::quantize(v[2])};
}

}  // namespace umbra
