#pragma once

// Scheduled attack: place an occluder so that, at a chosen time, the sun
// casts an adversarial shadow on the sign.

#include <cstdint>
#include <span>
#include <vector>

#include "umbra/attack.hpp"
#include "umbra/solar.hpp"

namespace umbra {

struct ScheduledAttackResult {
  SunPosition sun{};
  SceneGeometry scene;  // sign plane plus the optimized occluder
  AttackReport report;
};

// Searches occluder vertex (x, z) pairs at y = scene.occluder_distance; the
// occluder stored in `scene` on input is ignored. Bounds are the sign extent
// expanded by cfg.bound_margin, shifted along the sun ray to the occluder
// plane.
inline ScheduledAttackResult scheduled_attack(const SceneGeometry& scene_in, const SolarContext& when,
                                              const Image& sign, std::size_t y_true, const RegionMask& mask,
                                              Classifier& classifier, const AttackConfig& cfg) {
  cfg.validate();
  scene_in.sign.validate();
  if (sign.width() != scene_in.sign.width_px || sign.height() != scene_in.sign.height_px)
    throw std::invalid_argument("sign image size differs from the scene raster");

  ScheduledAttackResult out;
  out.sun = solar_position(when);
  out.scene = scene_in;
  const double dist = scene_in.occluder_distance;
  const SignPlane& plane = scene_in.sign;

  // Shadow offset of a point at y = dist; throws NoShadow / DegenerateProjection.
  const Vec3 shift = project_points(std::vector<Vec3>{{0.0, dist, 0.0}}, out.sun).front();
  const double mx = cfg.bound_margin * (plane.x_max - plane.x_min);
  const double mz = cfg.bound_margin * (plane.z_max - plane.z_min);
  Bounds bounds;
  for (std::size_t i = 0; i < cfg.edges; ++i) {
    bounds.lo.push_back(plane.x_min - mx - shift.x);
    bounds.hi.push_back(plane.x_max + mx - shift.x);
    bounds.lo.push_back(plane.z_min - mz - shift.z);
    bounds.hi.push_back(plane.z_max + mz - shift.z);
  }

  auto occluder_of = [dist](std::span<const double> v) {
    std::vector<Vec3> occ;
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) occ.push_back({v[i], dist, v[i + 1]});
    return occ;
  };
  const SunPosition sun = out.sun;
  const PolygonMap to_polygon = [&](std::span<const double> v) {
    SceneGeometry s = scene_in;
    s.occluder = occluder_of(v);
    return project_shadow(s, sun);
  };

  out.report = attack_parameterized(sign, y_true, mask, classifier, cfg, bounds, to_polygon, nullptr);
  if (out.report.shadow) {
    // Recover the occluder from the winning shadow polygon.
    std::vector<Point> px(out.report.shadow->polygon.vertices().begin(), out.report.shadow->polygon.vertices().end());
    out.scene.occluder = backproject(plane, px, sun, dist);
  }
  return out;
}

}  // namespace umbra
