#pragma once

// Expectation over transformation: a frozen sample of camera-like
// transforms, and the sample-mean estimate of the classifier's expected
// confidence under them.
//
// Each item is a chain applied in order: perspective warp, downsample and
// upsample back, brightness shift, motion blur. Each item also carries a
// multiplier on the shadow coefficient, modeling a mismatch between the
// measured k and the one the camera ends up seeing.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "umbra/classifier.hpp"
#include "umbra/image.hpp"
#include "umbra/random.hpp"

namespace umbra {

// Sampled parameter ranges.
struct TransformRanges {
  std::vector<int> downsample_factors{1, 2, 4};
  double brightness_max{0.2};   // fraction of full scale, symmetric
  double corner_jitter_max{0.08};  // fraction of image side, per corner axis
  std::vector<int> blur_lengths{1, 3, 5, 7};
  double k_multiplier_min{0.85};
  double k_multiplier_max{1.15};

  void validate() const {
    if (downsample_factors.empty() || blur_lengths.empty())
      throw std::invalid_argument("transform ranges need at least one downsample factor and blur length");
    for (int f : downsample_factors)
      if (f < 1) throw std::invalid_argument("downsample factor must be >= 1");
    for (int l : blur_lengths)
      if (l < 1) throw std::invalid_argument("blur length must be >= 1");
    if (brightness_max < 0.0 || corner_jitter_max < 0.0 || corner_jitter_max >= 0.5)
      throw std::invalid_argument("bad brightness/jitter range");
    if (!(k_multiplier_min > 0.0) || k_multiplier_max < k_multiplier_min)
      throw std::invalid_argument("bad k multiplier range");
  }
};

struct TransformItem {
  int downsample{1};
  double brightness{0.0};
  // Source-corner offsets as fractions of the side: top-left, top-right,
  // bottom-right, bottom-left.
  std::array<std::array<double, 2>, 4> corner_jitter{};
  int blur_length{1};
  double blur_angle_deg{0.0};
  double k_multiplier{1.0};

  static TransformItem identity() { return {}; }

  bool has_warp() const noexcept {
    for (const auto& c : corner_jitter)
      if (c[0] != 0.0 || c[1] != 0.0) return true;
    return false;
  }

  friend bool operator==(const TransformItem&, const TransformItem&) = default;
};

// items[0] is the untransformed original; the rest are sampled.
struct TransformPlan {
  std::vector<TransformItem> items;

  std::size_t size() const noexcept { return items.size(); }
  friend bool operator==(const TransformPlan&, const TransformPlan&) = default;
};

inline constexpr std::size_t kPlanSamples = 10;

inline TransformPlan sample_plan(std::uint64_t seed, const TransformRanges& ranges = {}) {
  ranges.validate();
  Rng rng(seed);
  TransformPlan plan;
  plan.items.reserve(kPlanSamples + 1);
  plan.items.push_back(TransformItem::identity());
  for (std::size_t i = 0; i < kPlanSamples; ++i) {
    TransformItem t;
    t.downsample = ranges.downsample_factors[rng.below(ranges.downsample_factors.size())];
    t.brightness = rng.uniform(-ranges.brightness_max, ranges.brightness_max);
    for (auto& c : t.corner_jitter) {
      c[0] = rng.uniform(-ranges.corner_jitter_max, ranges.corner_jitter_max);
      c[1] = rng.uniform(-ranges.corner_jitter_max, ranges.corner_jitter_max);
    }
    t.blur_length = ranges.blur_lengths[rng.below(ranges.blur_lengths.size())];
    t.blur_angle_deg = rng.uniform(0.0, 180.0);
    t.k_multiplier = rng.uniform(ranges.k_multiplier_min, ranges.k_multiplier_max);
    plan.items.push_back(t);
  }
  return plan;
}

// A plan of n copies of the identity; exercises the estimator without
// perturbing the input.
inline TransformPlan identity_plan(std::size_t n = kPlanSamples + 1) {
  return {std::vector<TransformItem>(n, TransformItem::identity())};
}

namespace detail {

// Bilinear sample at continuous pixel-index coordinates, edge-replicated.
inline std::array<double, 3> sample_bilinear(const Image& img, double fx, double fy) {
  const double cx = std::clamp(fx, 0.0, static_cast<double>(img.width() - 1));
  const double cy = std::clamp(fy, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double tx = cx - x0;
  const double ty = cy - y0;
  const RgbPixel p00 = img.at(x0, y0), p10 = img.at(x1, y0), p01 = img.at(x0, y1), p11 = img.at(x1, y1);
  const auto mix = [&](std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
  };
  return {mix(p00.r, p10.r, p01.r, p11.r), mix(p00.g, p10.g, p01.g, p11.g),
          mix(p00.b, p10.b, p01.b, p11.b)};
}

inline RgbPixel to_pixel(const std::array<double, 3>& v) {
  return {quantize(v[0]), quantize(v[1]), quantize(v[2])};
}

// Homography taking destination corners to the jittered source corners.
inline Eigen::Matrix3d corner_homography(const std::array<std::array<double, 2>, 4>& dst,
                                         const std::array<std::array<double, 2>, 4>& src) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = dst[i][0], y = dst[i][1], u = src[i][0], v = src[i][1];
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return m;
}

inline Image perspective_warp(const Image& x, const std::array<std::array<double, 2>, 4>& jitter) {
  const double w = x.width(), h = x.height();
  const std::array<std::array<double, 2>, 4> dst{{{0, 0}, {w, 0}, {w, h}, {0, h}}};
  auto src = dst;
  for (int i = 0; i < 4; ++i) {
    src[i][0] += jitter[i][0] * w;
    src[i][1] += jitter[i][1] * h;
  }
  const Eigen::Matrix3d m = corner_homography(dst, src);
  Image out(x.width(), x.height());
  for (int r = 0; r < x.height(); ++r) {
    for (int c = 0; c < x.width(); ++c) {
      const Eigen::Vector3d p = m * Eigen::Vector3d(c + 0.5, r + 0.5, 1.0);
      out.set(c, r, to_pixel(sample_bilinear(x, p.x() / p.z() - 0.5, p.y() / p.z() - 0.5)));
    }
  }
  return out;
}

// Box-filter downsample by `factor`, then nearest-neighbor back to full size.
inline Image resample(const Image& x, int factor) {
  const int sw = (x.width() + factor - 1) / factor;
  const int sh = (x.height() + factor - 1) / factor;
  std::vector<std::array<double, 3>> small(static_cast<std::size_t>(sw) * sh);
  for (int by = 0; by < sh; ++by) {
    for (int bx = 0; bx < sw; ++bx) {
      std::array<double, 3> acc{};
      int n = 0;
      for (int y = by * factor; y < std::min(x.height(), (by + 1) * factor); ++y) {
        for (int c = bx * factor; c < std::min(x.width(), (bx + 1) * factor); ++c) {
          const RgbPixel p = x.at(c, y);
          acc[0] += p.r;
          acc[1] += p.g;
          acc[2] += p.b;
          ++n;
        }
      }
      for (auto& v : acc) v /= n;
      small[static_cast<std::size_t>(by) * sw + bx] = acc;
    }
  }
  Image out(x.width(), x.height());
  for (int y = 0; y < x.height(); ++y)
    for (int c = 0; c < x.width(); ++c)
      out.set(c, y, to_pixel(small[static_cast<std::size_t>(y / factor) * sw + c / factor]));
  return out;
}

inline Image shift_brightness(const Image& x, double delta) {
  Image out = x;
  const double offset = delta * 255.0;
  for (auto& byte : out.bytes()) byte = quantize(byte + offset);
  return out;
}

// Normalized line kernel of `length` taps centered on each pixel.
inline Image motion_blur(const Image& x, int length, double angle_deg) {
  const double a = angle_deg * 3.14159265358979323846 / 180.0;
  const double dx = std::cos(a), dy = std::sin(a);
  Image out(x.width(), x.height());
  for (int y = 0; y < x.height(); ++y) {
    for (int c = 0; c < x.width(); ++c) {
      std::array<double, 3> acc{};
      for (int t = 0; t < length; ++t) {
        const double s = t - (length - 1) / 2.0;
        const auto v = sample_bilinear(x, c + s * dx, y + s * dy);
        for (int ch = 0; ch < 3; ++ch) acc[ch] += v[ch];
      }
      for (auto& v : acc) v /= length;
      out.set(c, y, to_pixel(acc));
    }
  }
  return out;
}

}  // namespace detail

inline Image apply_transform(const TransformItem& t, const Image& x) {
  Image out = x;
  if (x.empty()) return out;
  if (t.has_warp()) out = detail::perspective_warp(out, t.corner_jitter);
  if (t.downsample > 1) out = detail::resample(out, t.downsample);
  if (t.brightness != 0.0) out = detail::shift_brightness(out, t.brightness);
  if (t.blur_length > 1) out = detail::motion_blur(out, t.blur_length, t.blur_angle_deg);
  return out;
}

// Synthesizes the candidate image for a given k multiplier.
using ImageBuilder = std::function<Image(double k_multiplier)>;

// Mean confidence vector over the plan; one classifier query per item.
inline ConfidenceVector expected_confidences(const ImageBuilder& build, const TransformPlan& plan,
                                             Classifier& classifier) {
  if (plan.items.empty()) throw std::invalid_argument("empty transform plan");
  ConfidenceVector mean(classifier.num_classes(), 0.0);
  for (const auto& item : plan.items) {
    const ConfidenceVector c = classifier.predict(apply_transform(item, build(item.k_multiplier)));
    if (c.size() != mean.size()) throw QueryError("classifier returned wrong vector length");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += c[i];
  }
  for (auto& v : mean) v /= static_cast<double>(plan.items.size());
  return mean;
}

inline double expected_confidence(const ImageBuilder& build, const TransformPlan& plan,
                                  Classifier& classifier, std::size_t class_index) {
  const ConfidenceVector mean = expected_confidences(build, plan, classifier);
  if (class_index >= mean.size()) throw std::out_of_range("class index out of range");
  return mean[class_index];
}

}  // namespace umbra
