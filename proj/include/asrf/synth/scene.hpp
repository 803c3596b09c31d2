// Procedural city blocks: axis-aligned boxes on a checkered ground patch, ray-cast analytically.
#pragma once

#include "asrf/geom.hpp"
#include "asrf/synth/image.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace asrf::synth {

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
  }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
};

/// Slab test. Returns the entry/exit distances along the ray, clipped to t >= 0.
inline std::optional<std::pair<double, double>> intersect_aabb(const Aabb& b, const Vec3& o, const Vec3& d) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return std::nullopt;
      continue;
    }
    double ta = (b.min[a] - o[a]) / d[a];
    double tb = (b.max[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

struct Box {
  Aabb box;
  Vec3 albedo = Vec3::Constant(0.5);
};

struct SceneSpec {
  std::uint64_t seed = 1;
  double half_extent = 90.0;  // ground patch and bounds span [-h, h] in x and y
  double max_height = 30.0;
  int box_count = 24;
  double box_min_size = 6.0, box_max_size = 16.0;
  double box_min_height = 4.0, box_max_height = 22.0;
  double box_gap = 4.0;
  double checker = 8.0;
  Vec3 ground_a = Vec3(0.42, 0.45, 0.38);
  Vec3 ground_b = Vec3(0.62, 0.60, 0.52);
  Vec3 background = Vec3(0.72, 0.82, 0.95);
};

struct Scene {
  SceneSpec spec;
  Aabb bounds;  // everything visible lives inside
  std::vector<Box> boxes;
  Vec3 sun = Vec3(0.45, 0.3, 0.84).normalized();
  double ambient = 0.35;
};

struct Hit {
  double t = 0.0;
  Vec3 normal = Vec3::UnitZ();
  Vec3 albedo = Vec3::Zero();
};

inline Scene build_scene(const SceneSpec& spec) {
  require(spec.half_extent > 0 && spec.max_height > 0, "scene: extents must be positive");
  require(spec.box_count >= 0, "scene: negative box count");
  require(spec.box_min_size > 0 && spec.box_min_size <= spec.box_max_size, "scene: bad box size range");
  require(spec.box_min_height > 0 && spec.box_min_height <= spec.box_max_height && spec.box_max_height <= spec.max_height,
          "scene: bad box height range");
  require(spec.checker > 0, "scene: checker size must be positive");
  Scene s;
  s.spec = spec;
  s.bounds.min = Vec3(-spec.half_extent, -spec.half_extent, -1.0);
  s.bounds.max = Vec3(spec.half_extent, spec.half_extent, spec.max_height);

  const double avail = 2.0 * spec.half_extent;
  const double cell = spec.box_min_size + spec.box_gap;
  const auto capacity = static_cast<long>(std::floor(avail / cell) * std::floor(avail / cell) / 2.0);
  if (spec.box_count > capacity) {
    throw ValidationError("scene: " + std::to_string(spec.box_count) + " boxes exceed packing capacity " +
                          std::to_string(capacity));
  }
  static const Vec3 palette[] = {{0.85, 0.35, 0.30}, {0.30, 0.55, 0.85}, {0.90, 0.80, 0.35}, {0.55, 0.80, 0.45},
                                 {0.75, 0.50, 0.80}, {0.95, 0.95, 0.92}, {0.40, 0.40, 0.45}, {0.90, 0.60, 0.30}};
  Rng rng(spec.seed);
  const int max_attempts = 2000 * std::max(1, spec.box_count);
  int attempts = 0;
  while (static_cast<int>(s.boxes.size()) < spec.box_count) {
    if (++attempts > max_attempts) {
      throw ValidationError("scene: could not place " + std::to_string(spec.box_count) +
                            " boxes (packing capacity exceeded)");
    }
    const double sx = rng.uniform(spec.box_min_size, spec.box_max_size);
    const double sy = rng.uniform(spec.box_min_size, spec.box_max_size);
    const double h = rng.uniform(spec.box_min_height, spec.box_max_height);
    const double cx = rng.uniform(-spec.half_extent + 0.5 * sx, spec.half_extent - 0.5 * sx);
    const double cy = rng.uniform(-spec.half_extent + 0.5 * sy, spec.half_extent - 0.5 * sy);
    Box b;
    b.box.min = Vec3(cx - 0.5 * sx, cy - 0.5 * sy, 0.0);
    b.box.max = Vec3(cx + 0.5 * sx, cy + 0.5 * sy, h);
    b.albedo = palette[rng.below(8)];
    bool clear = true;
    for (const auto& o : s.boxes) {
      if (b.box.min.x() < o.box.max.x() + spec.box_gap && o.box.min.x() < b.box.max.x() + spec.box_gap &&
          b.box.min.y() < o.box.max.y() + spec.box_gap && o.box.min.y() < b.box.max.y() + spec.box_gap) {
        clear = false;
        break;
      }
    }
    if (clear) s.boxes.push_back(b);
  }
  return s;
}

/// Nearest surface along o + t d (d unit), t > 0.
inline std::optional<Hit> intersect_scene(const Scene& s, const Vec3& o, const Vec3& d) {
  std::optional<Hit> best;
  if (std::abs(d.z()) > 1e-12) {
    const double t = -o.z() / d.z();
    if (t > 1e-9) {
      const Vec3 p = o + t * d;
      const double h = s.spec.half_extent;
      if (std::abs(p.x()) <= h && std::abs(p.y()) <= h) {
        const long ix = static_cast<long>(std::floor(p.x() / s.spec.checker));
        const long iy = static_cast<long>(std::floor(p.y() / s.spec.checker));
        best = Hit{t, Vec3::UnitZ(), ((ix + iy) & 1) ? s.spec.ground_b : s.spec.ground_a};
      }
    }
  }
  for (const auto& b : s.boxes) {
    const auto span = intersect_aabb(b.box, o, d);
    if (!span || span->first <= 1e-9) continue;
    const double t = span->first;
    if (best && t >= best->t) continue;
    const Vec3 p = o + t * d;
    Vec3 n = Vec3::Zero();
    double closest = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      const double dmin = std::abs(p[a] - b.box.min[a]);
      const double dmax = std::abs(p[a] - b.box.max[a]);
      if (dmin < closest) { closest = dmin; n = -Vec3::Unit(a); }
      if (dmax < closest) { closest = dmax; n = Vec3::Unit(a); }
    }
    best = Hit{t, n, b.albedo};
  }
  return best;
}

inline Vec3 shade(const Scene& s, const Hit& h) {
  const double lambert = std::max(0.0, h.normal.dot(s.sun));
  return (h.albedo * (s.ambient + (1.0 - s.ambient) * lambert)).cwiseMin(1.0);
}

struct RgbdFrame {
  ImageRGB rgb;
  DepthMap depth;
};

/// Analytic RGB-D: Lambertian color, Euclidean hit distance; misses get background and depth 0.
inline RgbdFrame gt_render(const Scene& s, const Pose& pose, const Intrinsics& k) {
  RgbdFrame f{ImageRGB(k.width, k.height), DepthMap(k.width, k.height)};
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Ray r = ray_from_pixel(pose, k, u, v);
      const auto hit = intersect_scene(s, r.o, r.d);
      const Vec3 c = hit ? shade(s, *hit) : s.spec.background;
      float* p = f.rgb.px(u, v);
      p[0] = static_cast<float>(c.x());
      p[1] = static_cast<float>(c.y());
      p[2] = static_cast<float>(c.z());
      f.depth.at(u, v) = hit ? static_cast<float>(hit->t) : 0.f;
    }
  }
  return f;
}

}  // namespace asrf::synth
