#pragma once

// Shadow polygons and their rasterization onto the target mask.
//
// Coordinates are (x = column, y = row) in pixel units; pixel (c, r) covers
// [c, c+1) x [r, r+1) and is tested at its center. Points on an edge count
// as inside; everywhere else the even-odd rule decides, so self-intersecting
// vertex orders produced by the optimizer are valid input.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "umbra/image.hpp"

namespace umbra {

struct Point {
  double x{0.0};
  double y{0.0};

  friend constexpr bool operator==(const Point&, const Point&) = default;
};

class Polygon {
 public:
  Polygon() = default;

  explicit Polygon(std::vector<Point> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.size() < 3) throw std::invalid_argument("polygon needs at least 3 vertices");
  }

  // Interleaved (x0, y0, x1, y1, ...) as produced by the optimizer.
  static Polygon from_coordinates(std::span<const double> xy) {
    if (xy.size() % 2 != 0) throw std::invalid_argument("odd coordinate count");
    std::vector<Point> v;
    v.reserve(xy.size() / 2);
    for (std::size_t i = 0; i < xy.size(); i += 2) v.push_back({xy[i], xy[i + 1]});
    return Polygon(std::move(v));
  }

  std::span<const Point> vertices() const noexcept { return vertices_; }
  std::size_t size() const noexcept { return vertices_.size(); }

  // All vertices collinear (or coincident): the enclosed region is empty.
  bool degenerate() const noexcept {
    if (vertices_.size() < 3) return true;
    const Point o = vertices_.front();
    double scale = 0.0;
    for (const auto& p : vertices_) scale = std::max({scale, std::abs(p.x - o.x), std::abs(p.y - o.y)});
    if (scale == 0.0) return true;
    const double eps = 1e-12 * scale * scale;
    for (std::size_t i = 1; i < vertices_.size(); ++i) {
      for (std::size_t j = i + 1; j < vertices_.size(); ++j) {
        const double cross = (vertices_[i].x - o.x) * (vertices_[j].y - o.y) -
                             (vertices_[i].y - o.y) * (vertices_[j].x - o.x);
        if (std::abs(cross) > eps) return false;
      }
    }
    return true;
  }

  Point centroid() const noexcept {
    Point c;
    for (const auto& p : vertices_) {
      c.x += p.x;
      c.y += p.y;
    }
    const double n = static_cast<double>(vertices_.size());
    return {c.x / n, c.y / n};
  }

  friend bool operator==(const Polygon&, const Polygon&) = default;

 private:
  std::vector<Point> vertices_;
};

namespace detail {

inline bool on_segment(Point p, Point a, Point b) noexcept {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  const double cross = dx * (p.y - a.y) - dy * (p.x - a.x);
  const double tol = 1e-9 * std::max(1.0, std::max(std::abs(p.x), std::abs(p.y)));
  if (std::abs(cross) > tol * std::max(len, 1.0)) return false;
  return p.x >= std::min(a.x, b.x) - tol && p.x <= std::max(a.x, b.x) + tol &&
         p.y >= std::min(a.y, b.y) - tol && p.y <= std::max(a.y, b.y) + tol;
}

// Membership without the degeneracy check.
inline bool contains_unchecked(std::span<const Point> v, Point p) noexcept {
  const std::size_t n = v.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if (detail::on_segment(p, v[j], v[i])) return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((v[i].y > p.y) != (v[j].y > p.y)) {
      const double x_cross = v[j].x + (p.y - v[j].y) * (v[i].x - v[j].x) / (v[i].y - v[j].y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace detail

inline bool contains(const Polygon& poly, Point p) noexcept {
  if (poly.degenerate()) return false;
  return detail::contains_unchecked(poly.vertices(), p);
}

// Pixelwise AND of the mask with pixel-center membership in the polygon.
// Row by row: the crossing parity uses the same arithmetic as
// contains_unchecked, and the edge test only runs on centers that lie
// within a hair of some edge.
inline RegionMask rasterize(const Polygon& poly, const RegionMask& mask) {
  RegionMask out(mask.width(), mask.height());
  if (poly.size() < 3 || poly.degenerate()) return out;
  const auto v = poly.vertices();
  const std::size_t n = v.size();

  double min_y = v[0].y, max_y = v[0].y, scale = 1.0;
  for (const auto& q : v) {
    min_y = std::min(min_y, q.y);
    max_y = std::max(max_y, q.y);
    scale = std::max({scale, std::abs(q.x), std::abs(q.y)});
  }
  const double hair = 1e-6 * scale;
  const int y0 = std::max(0, static_cast<int>(std::floor(std::max(min_y, -1.0) - 1.0)));
  const int y1 = std::min(mask.height() - 1, static_cast<int>(std::ceil(std::min(max_y, mask.height() + 1.0))));

  const double wide = mask.width() + 2.0;
  const auto column = [&](double x) { return static_cast<int>(std::clamp(x - 0.5, -2.0, wide)); };

  std::vector<double> crossings;
  std::vector<std::pair<double, double>> near;
  crossings.reserve(n);
  near.reserve(n);
  for (int y = y0; y <= y1; ++y) {
    const double py = y + 0.5;
    crossings.clear();
    near.clear();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point a = v[j], b = v[i];
      if ((b.y > py) != (a.y > py)) crossings.push_back(a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y));
      // Span of x over the part of the edge within `hair` of this row.
      const double lo_y = std::min(a.y, b.y), hi_y = std::max(a.y, b.y);
      if (py < lo_y - hair || py > hi_y + hair) continue;
      double xa = std::min(a.x, b.x), xb = std::max(a.x, b.x);
      if (hi_y - lo_y > hair) {
        const double t0 = std::clamp((py - hair - a.y) / (b.y - a.y), 0.0, 1.0);
        const double t1 = std::clamp((py + hair - a.y) / (b.y - a.y), 0.0, 1.0);
        xa = a.x + std::min(t0, t1) * (b.x - a.x);
        xb = a.x + std::max(t0, t1) * (b.x - a.x);
        if (xa > xb) std::swap(xa, xb);
      }
      near.emplace_back(xa - hair, xb + hair);
    }
    std::sort(crossings.begin(), crossings.end());

    // Centers strictly left of an odd number of crossings are inside.
    for (std::size_t c = 0; c + 1 < crossings.size(); c += 2) {
      const int from = std::max(0, column(crossings[c]) - 1);
      const int to = std::min(mask.width() - 1, column(crossings[c + 1]) + 1);
      for (int x = from; x <= to; ++x) {
        const double px = x + 0.5;
        if (!mask.at(x, y)) continue;
        const auto above = crossings.end() - std::upper_bound(crossings.begin(), crossings.end(), px);
        if (above % 2 == 1) out.set(x, y, true);
      }
    }
    for (const auto& [xa, xb] : near) {
      const int from = std::max(0, column(xa) - 1);
      const int to = std::min(mask.width() - 1, column(xb) + 1);
      for (int x = from; x <= to; ++x) {
        if (!out.at(x, y) && mask.at(x, y) && detail::contains_unchecked(v, {x + 0.5, y + 0.5})) out.set(x, y, true);
      }
    }
  }
  return out;
}

}  // namespace umbra
