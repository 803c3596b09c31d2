// Camera trajectories sampled at the base rate: a lawnmower sweep ("simple") and a smoothed
// random flight ("hard"), both optionally perturbed by a fast sway that the RGB rate cannot resolve.
#pragma once

#include "asrf/synth/scene.hpp"
#include "asrf/timepose/losses.hpp"

#include <string>
#include <vector>

namespace asrf::synth {

using timepose::TimedPoseSample;

enum class TrajectoryKind { Simple, Hard };

inline TrajectoryKind parse_trajectory_kind(const std::string& s) {
  if (s == "simple") return TrajectoryKind::Simple;
  if (s == "hard") return TrajectoryKind::Hard;
  throw ValidationError("trajectory: unknown kind '" + s + "' (expected simple or hard)");
}

inline std::string to_string(TrajectoryKind k) { return k == TrajectoryKind::Simple ? "simple" : "hard"; }

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::Simple;
  double duration = 60.0;  // seconds
  double rate = 50.0;      // base frames per second
  double altitude_min = 30.0, altitude_max = 30.0;
  double max_speed = 25.0;  // m/s, includes the sway contribution
  std::uint64_t seed = 3;
  double extent = 100.0;  // side of the swept square (simple) or waypoint region (hard), meters
  int legs = 4;           // simple only
  double pitch_deg = 45.0;
  double pitch_var_deg = 10.0;   // hard only
  double waypoint_sep = 25.0;    // hard only: minimum distance between consecutive waypoints
  double heading_lookahead = 8.0;  // hard only: heading follows the chord to the point this far ahead, meters

  // Sway: per axis, `sway_components` sinusoids with frequencies in [lo, hi] Hz.
  double sway_amplitude = 0.0;   // meters, summed over components per axis
  double sway_angle_deg = 0.0;   // degrees, summed over components per axis
  double sway_freq_lo = 1.7, sway_freq_hi = 2.2;
  int sway_components = 2;

  void validate() const {
    require(duration > 0 && rate > 0, "trajectory: duration and rate must be positive");
    require(max_speed > 0, "trajectory: max_speed must be positive");
    require(altitude_min <= altitude_max, "trajectory: altitude_min > altitude_max");
    require(extent > 0, "trajectory: extent must be positive");
    require(kind != TrajectoryKind::Simple || legs >= 1, "trajectory: need at least one leg");
    require(sway_amplitude >= 0 && sway_angle_deg >= 0, "trajectory: negative sway");
    require(sway_freq_lo > 0 && sway_freq_lo <= sway_freq_hi, "trajectory: bad sway frequency range");
    require(sway_components >= 1, "trajectory: need at least one sway component");
  }

  /// Upper bound on the linear speed the sway adds (m/s).
  double sway_speed_bound() const { return std::sqrt(3.0) * 2.0 * kPi * sway_freq_hi * sway_amplitude; }
};

namespace detail {

struct Sinusoid {
  double amp, freq, phase;
};

struct Sway {
  std::vector<Sinusoid> trans[3], rot[3];

  static Sway make(const TrajectorySpec& spec, Rng& rng) {
    Sway s;
    const double n = spec.sway_components;
    for (int a = 0; a < 3; ++a) {
      for (int k = 0; k < spec.sway_components; ++k) {
        s.trans[a].push_back({spec.sway_amplitude / n, rng.uniform(spec.sway_freq_lo, spec.sway_freq_hi),
                              rng.uniform(0, 2 * kPi)});
        s.rot[a].push_back({deg2rad(spec.sway_angle_deg) / n, rng.uniform(spec.sway_freq_lo, spec.sway_freq_hi),
                            rng.uniform(0, 2 * kPi)});
      }
    }
    return s;
  }

  static Vec3 eval(const std::vector<Sinusoid> (&c)[3], double t) {
    Vec3 out = Vec3::Zero();
    for (int a = 0; a < 3; ++a)
      for (const auto& s : c[a]) out[a] += s.amp * std::sin(2 * kPi * s.freq * t + s.phase);
    return out;
  }

  Pose apply(const Pose& p, double t) const {
    const Vec3 w = eval(rot, t);
    const double ang = w.norm();
    Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
    if (ang > 0) dq = Eigen::Quaterniond(Eigen::AngleAxisd(ang, w / ang));
    return Pose(p.q() * dq, p.x() + eval(trans, t));
  }
};

inline Eigen::Quaterniond camera_rotation(double yaw, double pitch) {
  const Vec3 f(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), -std::sin(pitch));
  return look_rotation(f, Vec3::UnitZ());
}

/// Piecewise path of straight legs and semicircular turns, parameterized by arc length.
struct SweepPath {
  double x0, x1, spacing, y0, z;
  int legs;
  double leg_len() const { return x1 - x0; }
  double turn_len() const { return kPi * spacing / 2.0; }
  double length() const { return legs * leg_len() + (legs - 1) * turn_len(); }

  // Position and heading at arc length s.
  std::pair<Vec3, double> at(double s) const {
    s = std::clamp(s, 0.0, length());
    for (int k = 0; k < legs; ++k) {
      const double y = y0 + k * spacing;
      const bool fwd = (k % 2) == 0;
      if (s <= leg_len() || k + 1 == legs) {
        const double a = std::min(s, leg_len());
        return {Vec3(fwd ? x0 + a : x1 - a, y, z), fwd ? 0.0 : kPi};
      }
      s -= leg_len();
      if (s <= turn_len()) {
        const double r = spacing / 2.0;
        const double phi = s / r;  // swept angle
        const double cy = y + r;
        // Turn bulges outside the swept square: around (x1, cy) after a forward leg, (x0, cy) after a return.
        if (fwd) return {Vec3(x1 + r * std::sin(phi), cy - r * std::cos(phi), z), phi};
        return {Vec3(x0 - r * std::sin(phi), cy - r * std::cos(phi), z), kPi - phi};
      }
      s -= turn_len();
    }
    return {Vec3(x1, y0, z), 0.0};  // unreachable
  }
};

/// Centripetal Catmull-Rom between p1 and p2 (u in [0, 1]); free of cusps and self-intersections.
inline Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double u) {
  auto knot = [](const Vec3& a, const Vec3& b) { return std::max(std::sqrt((b - a).norm()), 1e-6); };
  const double t0 = 0.0, t1 = t0 + knot(p0, p1), t2 = t1 + knot(p1, p2), t3 = t2 + knot(p2, p3);
  const double t = t1 + u * (t2 - t1);
  const Vec3 a1 = (t1 - t) / (t1 - t0) * p0 + (t - t0) / (t1 - t0) * p1;
  const Vec3 a2 = (t2 - t) / (t2 - t1) * p1 + (t - t1) / (t2 - t1) * p2;
  const Vec3 a3 = (t3 - t) / (t3 - t2) * p2 + (t - t2) / (t3 - t2) * p3;
  const Vec3 b1 = (t2 - t) / (t2 - t0) * a1 + (t - t0) / (t2 - t0) * a2;
  const Vec3 b2 = (t3 - t) / (t3 - t1) * a2 + (t - t1) / (t3 - t1) * a3;
  return (t2 - t) / (t2 - t1) * b1 + (t - t1) / (t2 - t1) * b2;
}

}  // namespace detail

/// Base-rate samples with timestamps k / rate. Ground-truth velocities are not attached.
inline std::vector<TimedPoseSample> gen_trajectory(const TrajectorySpec& spec, const Aabb& bounds) {
  spec.validate();
  Rng rng(spec.seed);
  const auto n = static_cast<std::size_t>(std::floor(spec.duration * spec.rate + 1e-9)) + 1;
  const Vec3 c = bounds.center();
  const double half = spec.extent / 2.0;
  if (c.x() - half < bounds.min.x() || c.x() + half > bounds.max.x() || c.y() - half < bounds.min.y() ||
      c.y() + half > bounds.max.y()) {
    throw ValidationError("trajectory: bounds too small for a " + std::to_string(spec.extent) + " m sweep leg");
  }
  const double v_cap = spec.max_speed - spec.sway_speed_bound();
  if (v_cap <= 0) throw ValidationError("trajectory: sway alone exceeds max_speed");
  const detail::Sway sway = detail::Sway::make(spec, rng);
  const double pitch = deg2rad(spec.pitch_deg);

  std::vector<TimedPoseSample> out(n);
  if (spec.kind == TrajectoryKind::Simple) {
    const double spacing = spec.legs > 1 ? spec.extent / (spec.legs - 1) : 0.0;
    const double z = 0.5 * (spec.altitude_min + spec.altitude_max);
    detail::SweepPath path{c.x() - half, c.x() + half, spacing, c.y() - (spec.legs > 1 ? half : 0.0), z, spec.legs};
    const double speed = path.length() / spec.duration;
    if (speed > v_cap) {
      throw ValidationError("trajectory: sweep needs " + std::to_string(speed) + " m/s, above the " +
                            std::to_string(v_cap) + " m/s budget");
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) / spec.rate;
      const auto [p, yaw] = path.at(speed * t);
      out[k].t = t;
      out[k].pose = sway.apply(Pose(detail::camera_rotation(yaw, pitch), p), t);
    }
    return out;
  }

  // Hard: Catmull-Rom through random waypoints, traversed with a varying speed profile.
  const double zlo = spec.altitude_min, zhi = spec.altitude_max;
  auto random_point = [&] {
    return Vec3(rng.uniform(c.x() - half, c.x() + half), rng.uniform(c.y() - half, c.y() + half),
                rng.uniform(zlo, zhi));
  };
  // Turns sharper than 90 degrees make the heading whip around; resample such waypoints.
  auto turn_too_sharp = [](const Vec3& a, const Vec3& b, const Vec3& c) {
    const Eigen::Vector2d u = (b - a).head<2>().normalized(), w = (c - b).head<2>().normalized();
    return u.dot(w) < 0.0;
  };
  const double dist_needed = v_cap * spec.duration;
  std::vector<Vec3> wp{random_point()};
  double approx = 0.0;
  int backtracks = 0;
  while (approx < 1.2 * dist_needed + 4 * spec.waypoint_sep || wp.size() < 4) {
    Vec3 p;
    int tries = 0;
    do {
      p = random_point();
      if (++tries > 2000) break;
    } while ((p - wp.back()).head<2>().norm() < spec.waypoint_sep ||
             (wp.size() >= 2 && turn_too_sharp(wp[wp.size() - 2], wp.back(), p)));
    if (tries > 2000) {
      // Cornered: back up one waypoint and try again from there.
      if (wp.size() < 2) throw ValidationError("trajectory: waypoint separation too large for the region");
      approx -= (wp.back() - wp[wp.size() - 2]).norm();
      wp.pop_back();
      if (++backtracks > 10000) throw ValidationError("trajectory: cannot route waypoints in the region");
      continue;
    }
    approx += (p - wp.back()).norm();
    wp.push_back(p);
  }
  // Densely tabulate arc length of the spline between wp[1] and wp[m-2].
  const int per_seg = 400;
  std::vector<Vec3> pts;
  for (std::size_t i = 1; i + 2 < wp.size(); ++i)
    for (int j = 0; j < per_seg; ++j)
      pts.push_back(detail::catmull_rom(wp[i - 1], wp[i], wp[i + 1], wp[i + 2], static_cast<double>(j) / per_seg));
  pts.push_back(wp[wp.size() - 2]);
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  auto point_at = [&](double s) -> std::pair<Vec3, Vec3> {
    s = std::clamp(s, 0.0, cum.back());
    auto it = std::upper_bound(cum.begin(), cum.end(), s);
    std::size_t i = it == cum.end() ? cum.size() - 1 : static_cast<std::size_t>(it - cum.begin());
    i = std::max<std::size_t>(i, 1);
    const double seg = cum[i] - cum[i - 1];
    const double a = seg > 0 ? (s - cum[i - 1]) / seg : 0.0;
    const Vec3 tangent = seg > 0 ? Vec3((pts[i] - pts[i - 1]) / seg) : Vec3::UnitX();
    return {(1 - a) * pts[i - 1] + a * pts[i], tangent};
  };

  const double speed_phase = rng.uniform(0, 2 * kPi), pitch_phase = rng.uniform(0, 2 * kPi);
  const double speed_period = 17.0, pitch_period = 23.0;
  auto speed_at = [&](double t) { return v_cap * (0.7 + 0.3 * std::sin(2 * kPi * t / speed_period + speed_phase)); };
  double s = 0.0;
  const double dt = 1.0 / spec.rate;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (k > 0) {
      // Simpson on the speed profile; exact enough that the arc step never exceeds v_cap * dt.
      const double t0 = t - dt;
      s += dt / 6.0 * (speed_at(t0) + 4.0 * speed_at(t0 + 0.5 * dt) + speed_at(t));
    }
    if (s > cum.back()) throw ValidationError("trajectory: spline shorter than the flight (internal)");
    const auto [p, tan] = point_at(s);
    // Heading from a look-ahead chord keeps yaw smooth across tabulation segments.
    const auto ahead = point_at(s + spec.heading_lookahead).first;
    const Vec3 dir = (ahead - p).head<2>().norm() > 1e-6 ? Vec3(ahead - p) : tan;
    const double yaw = std::atan2(dir.y(), dir.x());
    const double pt = pitch + deg2rad(spec.pitch_var_deg) * std::sin(2 * kPi * t / pitch_period + pitch_phase);
    out[k].t = t;
    out[k].pose = sway.apply(Pose(detail::camera_rotation(yaw, pt), p), t);
  }
  return out;
}

}  // namespace asrf::synth
