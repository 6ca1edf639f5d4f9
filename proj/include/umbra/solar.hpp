#pragma once

// Sun position and occluder shadow projection onto the sign plane.
//
// Scene axes: X east, Y south, Z up. The sign lies on the XOZ plane (y = 0)
// and the occluder floats on its sunny side (y > 0). Timestamps are local
// mean solar time at the context longitude.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "umbra/classifier.hpp"
#include "umbra/error.hpp"
#include "umbra/geometry.hpp"
#include "umbra/image.hpp"
#include "umbra/shadow.hpp"

namespace umbra {

using Timestamp = std::chrono::sys_seconds;

// Accepts "YYYY-MM-DDTHH:MM:SS" (or a space instead of T).
inline Timestamp parse_timestamp(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  const std::string buf(text);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &s, &consumed) != 7 ||
      consumed != static_cast<int>(buf.size()) || (sep != 'T' && sep != ' '))
    throw std::invalid_argument("malformed timestamp '" + buf + "', expected YYYY-MM-DDTHH:MM:SS");
  using namespace std::chrono;
  const year_month_day date{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!date.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59)
    throw std::invalid_argument("timestamp out of range: '" + buf + "'");
  return sys_days{date} + hours{h} + minutes{mi} + seconds{s};
}

inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day_start = floor<days>(t);
  const year_month_day date{day_start};
  const hh_mm_ss hms{t - day_start};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

struct SolarContext {
  double latitude{45.0};
  double longitude{0.0};
  Timestamp timestamp{};

  void validate() const {
    if (!(latitude >= -90.0 && latitude <= 90.0)) throw std::invalid_argument("latitude must be in [-90, 90]");
    if (!(longitude >= -180.0 && longitude <= 180.0))
      throw std::invalid_argument("longitude must be in [-180, 180]");
  }
};

struct SunPosition {
  double elevation{0.0};  // degrees above the horizon
  double azimuth{0.0};    // degrees clockwise from north, [0, 360)
};

enum class DeclinationModel {
  Almanac,  // low-precision ecliptic longitude series
  Cosine,   // -23.44 cos(360 (d + 10) / 365)
};

namespace detail {

inline constexpr double kDeg = std::numbers::pi / 180.0;

inline double wrap_degrees(double a) {
  a = std::fmod(a, 360.0);
  return a < 0.0 ? a + 360.0 : a;
}

inline double solar_hour(Timestamp t) {
  using namespace std::chrono;
  return duration<double, std::ratio<3600>>(t - floor<days>(t)).count();
}

inline double declination(const SolarContext& ctx, DeclinationModel model) {
  using namespace std::chrono;
  if (model == DeclinationModel::Cosine) {
    const auto day_start = floor<days>(ctx.timestamp);
    const year_month_day date{day_start};
    const double doy = (day_start - sys_days{date.year() / January / 1}).count() + 1;
    return -23.44 * std::cos(360.0 / 365.0 * (doy + 10.0) * kDeg);
  }
  // Mean solar time -> universal time, then days from J2000.0.
  const double ut_offset_s = -ctx.longitude / 15.0 * 3600.0;
  const auto j2000 = sys_days{year{2000} / January / 1} + hours{12};
  const double n = duration<double>(ctx.timestamp - j2000).count() / 86400.0 + ut_offset_s / 86400.0;
  const double L = 280.460 + 0.9856474 * n;
  const double g = (357.528 + 0.9856003 * n) * kDeg;
  const double lambda = (L + 1.915 * std::sin(g) + 0.020 * std::sin(2.0 * g)) * kDeg;
  const double eps = (23.439 - 0.0000004 * n) * kDeg;
  return std::asin(std::sin(eps) * std::sin(lambda)) / kDeg;
}

}  // namespace detail

inline SunPosition solar_position(const SolarContext& ctx, DeclinationModel model = DeclinationModel::Almanac) {
  ctx.validate();
  using detail::kDeg;
  const double phi = ctx.latitude * kDeg;
  const double delta = detail::declination(ctx, model) * kDeg;
  const double h = 15.0 * (detail::solar_hour(ctx.timestamp) - 12.0) * kDeg;
  const double sin_el = std::sin(phi) * std::sin(delta) + std::cos(phi) * std::cos(delta) * std::cos(h);
  SunPosition out;
  out.elevation = std::asin(std::clamp(sin_el, -1.0, 1.0)) / kDeg;
  out.azimuth = detail::wrap_degrees(
      180.0 + std::atan2(std::sin(h), std::cos(h) * std::sin(phi) - std::tan(delta) * std::cos(phi)) / kDeg);
  return out;
}

struct Vec3 {
  double x{0.0}, y{0.0}, z{0.0};
};

// Unit vector from the scene toward the sun.
inline Vec3 sun_direction(const SunPosition& sun) {
  using detail::kDeg;
  const double el = sun.elevation * kDeg, az = sun.azimuth * kDeg;
  return {std::sin(az) * std::cos(el), -std::cos(az) * std::cos(el), std::sin(el)};
}

// Rectangular sign on the y = 0 plane and its raster size.
struct SignPlane {
  double x_min{-0.3}, x_max{0.3};
  double z_min{-0.3}, z_max{0.3};
  int width_px{32}, height_px{32};

  void validate() const {
    if (!(x_min < x_max) || !(z_min < z_max)) throw std::invalid_argument("sign extent must be non-empty");
    if (width_px <= 0 || height_px <= 0) throw std::invalid_argument("sign raster must be non-empty");
  }

  Point to_pixel(double x, double z) const {
    return {(x - x_min) / (x_max - x_min) * width_px, (z_max - z) / (z_max - z_min) * height_px};
  }
  Vec3 to_meters(Point p) const {
    return {x_min + p.x / width_px * (x_max - x_min), 0.0, z_max - p.y / height_px * (z_max - z_min)};
  }
};

struct SceneGeometry {
  SignPlane sign{};
  std::vector<Vec3> occluder;
  double occluder_distance{1.0};

  void validate() const {
    sign.validate();
    if (occluder.size() < 3) throw std::invalid_argument("occluder needs at least 3 vertices");
    for (const auto& v : occluder) {
      if (!(v.y > 0.0)) throw std::invalid_argument("occluder vertices must have y > 0");
    }
  }
};

// Casts each point along the sun ray onto y = 0.
inline std::vector<Vec3> project_points(std::span<const Vec3> points, const SunPosition& sun) {
  if (!(sun.elevation > 0.0)) throw NoShadow("sun is at or below the horizon");
  const Vec3 s = sun_direction(sun);
  const Vec3 d{-s.x, -s.y, -s.z};
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (p.y == 0.0) {
      out.push_back(p);
      continue;
    }
    if (std::abs(d.y) < 1e-12) throw DegenerateProjection("sun ray is parallel to the sign plane");
    const double t = -p.y / d.y;
    if (t < 0.0) throw NoShadow("sun is behind the sign plane");
    out.push_back({p.x + t * d.x, 0.0, p.z + t * d.z});
  }
  return out;
}

inline Polygon project_shadow(const SceneGeometry& scene, const SunPosition& sun) {
  scene.validate();
  std::vector<Point> px;
  for (const auto& q : project_points(scene.occluder, sun)) px.push_back(scene.sign.to_pixel(q.x, q.z));
  return Polygon(std::move(px));
}

// Occluder vertices at y = distance whose shadow lands on the given sign
// pixels under `sun`.
inline std::vector<Vec3> backproject(const SignPlane& sign, std::span<const Point> pixels, const SunPosition& sun,
                                     double distance = 1.0) {
  if (!(distance > 0.0)) throw std::invalid_argument("occluder distance must be positive");
  if (!(sun.elevation > 0.0)) throw NoShadow("sun is at or below the horizon");
  const Vec3 s = sun_direction(sun);
  if (std::abs(s.y) < 1e-12) throw DegenerateProjection("sun ray is parallel to the sign plane");
  if (s.y < 0.0) throw NoShadow("sun is behind the sign plane");
  const double u = distance / s.y;
  std::vector<Vec3> out;
  for (const auto& p : pixels) {
    const Vec3 q = sign.to_meters(p);
    out.push_back({q.x + u * s.x, distance, q.z + u * s.z});
  }
  return out;
}

struct SweepFrame {
  Timestamp time{};
  SunPosition sun{};
  std::optional<Polygon> shadow;  // absent when no shadow falls on the plane
  std::size_t label{0};
  double confidence_true{std::numeric_limits<double>::quiet_NaN()};
};

// One frame per step from start to end, both inclusive. Frames where the
// sun casts no shadow are recorded without querying the classifier.
inline std::vector<SweepFrame> scheduled_sweep(const SceneGeometry& scene, const SolarContext& start,
                                               const SolarContext& end, std::chrono::seconds step,
                                               const Image& sign, const RegionMask& mask, double k,
                                               Classifier& classifier, std::size_t y_true) {
  scene.validate();
  start.validate();
  validate_coefficient(k);
  if (start.latitude != end.latitude || start.longitude != end.longitude)
    throw std::invalid_argument("sweep endpoints must share a location");
  if (end.timestamp < start.timestamp) throw std::invalid_argument("sweep start is after its end");
  if (step < std::chrono::seconds(1)) throw std::invalid_argument("sweep step must be at least 1 s");
  if (!mask.matches(sign)) throw std::invalid_argument("mask size differs from image size");
  if (y_true >= classifier.num_classes()) throw std::out_of_range("true label out of range");

  const ShadowCanvas canvas(sign);
  std::vector<SweepFrame> frames;
  for (auto t = start.timestamp; t <= end.timestamp; t += step) {
    SweepFrame f;
    f.time = t;
    f.sun = solar_position({start.latitude, start.longitude, t});
    try {
      f.shadow = project_shadow(scene, f.sun);
    } catch (const NoShadow&) {
    } catch (const DegenerateProjection&) {
    }
    if (f.shadow) {
      const auto conf = classifier.predict(canvas.render(*f.shadow, k, mask));
      if (conf.size() != classifier.num_classes()) throw QueryError("classifier returned wrong vector length");
      f.label = argmax(conf);
      f.confidence_true = conf[y_true];
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

inline void write_sweep_csv(std::ostream& out, std::span<const SweepFrame> frames,
                            const std::vector<std::string>& class_names = {}) {
  out << "timestamp,elevation_deg,azimuth_deg,label,confidence_true\n";
  char num[64];
  for (const auto& f : frames) {
    out << format_timestamp(f.time);
    std::snprintf(num, sizeof num, ",%.6f,%.6f,", f.sun.elevation, f.sun.azimuth);
    out << num;
    if (!f.shadow) {
      out << "no_shadow,\n";
      continue;
    }
    if (f.label < class_names.size()) out << class_names[f.label];
    else out << f.label;
    std::snprintf(num, sizeof num, ",%.6f\n", f.confidence_true);
    out << num;
  }
}

}  // namespace umbra
