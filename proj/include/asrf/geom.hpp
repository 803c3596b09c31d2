// Rigid poses, the pinhole camera and ray generation.
//
// Conventions: poses are camera-to-world; the camera looks along +z with +x right and +y down.
// Quaternions are stored (w, x, y, z) with w >= 0.
#pragma once

#include "asrf/common.hpp"

#include <Eigen/Geometry>

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace asrf {

/// Flips q to the w >= 0 hemisphere and renormalizes.
inline Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError("quaternion has zero or non-finite norm");
  q.coeffs() /= n;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

class Pose {
 public:
  Pose() : q_(Eigen::Quaterniond::Identity()), x_(Vec3::Zero()) {}
  Pose(const Eigen::Quaterniond& q, const Vec3& x) : q_(canonical(q)), x_(x) {
    if (!x_.allFinite()) throw ValidationError("pose translation is not finite");
  }
  static Pose from_wxyz(double w, double qx, double qy, double qz, const Vec3& x) {
    return Pose(Eigen::Quaterniond(w, qx, qy, qz), x);
  }
  static Pose translation(const Vec3& x) { return Pose(Eigen::Quaterniond::Identity(), x); }
  static Pose rotation(const Eigen::Quaterniond& q) { return Pose(q, Vec3::Zero()); }
  static Pose from_matrix(const Eigen::Matrix4d& m) {
    return Pose(Eigen::Quaterniond(Mat3(m.topLeftCorner<3, 3>())), m.topRightCorner<3, 1>());
  }

  const Eigen::Quaterniond& q() const { return q_; }
  const Vec3& x() const { return x_; }
  Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }
  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = x_;
    return m;
  }
  Vec3 transform(const Vec3& p) const { return q_ * p + x_; }

 private:
  Eigen::Quaterniond q_;
  Vec3 x_;
};

/// Rigid transform from the RGB camera frame to the depth sensor frame.
struct Extrinsic {
  Pose rgb_to_depth;
};

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Intrinsics() = default;
  Intrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
    validate();
  }
  void validate() const {
    require(fx > 0 && fy > 0, "intrinsics: focal lengths must be positive");
    require(width > 0 && height > 0, "intrinsics: image size must be positive");
    require(cx > 0 && cx < width && cy > 0 && cy < height, "intrinsics: principal point outside image");
  }
  /// Symmetric camera with the given horizontal field of view.
  static Intrinsics from_fov(int w, int h, double hfov_deg) {
    const double f = 0.5 * w / std::tan(0.5 * deg2rad(hfov_deg));
    return Intrinsics(f, f, 0.5 * w, 0.5 * h, w, h);
  }
  /// Unit camera-frame direction through the pixel center (u + 0.5, v + 0.5).
  Vec3 camera_direction(double u, double v) const {
    return Vec3((u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1.0).normalized();
  }
};

struct Ray {
  Vec3 o = Vec3::Zero();
  Vec3 d = Vec3::UnitZ();
  double near = 0.0;
  double far = std::numeric_limits<double>::infinity();
};

/// "Apply b, then a": the composed transform maps p to a(b(p)).
inline Pose compose_pose(const Pose& a, const Pose& b) { return Pose(a.q() * b.q(), a.x() + a.q() * b.x()); }

inline Pose invert_pose(const Pose& a) {
  const Eigen::Quaterniond qi = a.q().conjugate();
  return Pose(qi, -(qi * a.x()));
}

/// World pose of the depth sensor given the RGB camera pose.
inline Pose rgb_to_depth_pose(const Pose& t_rgb, const Extrinsic& e) { return compose_pose(t_rgb, e.rgb_to_depth); }

/// Rotation matrix of q = (w, x, y, z) by the unit-quaternion formula (not renormalized).
inline Mat3 quat_matrix(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// d/dq of sum(G .* quat_matrix(q)).
inline Eigen::Vector4d quat_matrix_vjp(const Eigen::Vector4d& q, const Mat3& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Vector4d o;
  o[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  o[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1) -
              2 * x * g(2, 2));
  o[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1) -
              2 * y * g(2, 2));
  o[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
              x * g(2, 0) + y * g(2, 1));
  return o;
}

/// Geodesic angle between two rotations, degrees in [0, 180].
inline double rotation_angle_deg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const Eigen::Quaterniond rel = a.conjugate() * b;
  return rad2deg(2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w())));
}

struct PoseError {
  double rot_deg = 0.0;
  double trans_m = 0.0;
};

inline PoseError pose_error(const Pose& est, const Pose& gt) {
  return {rotation_angle_deg(est.q(), gt.q()), (est.x() - gt.x()).norm()};
}

inline Ray ray_from_pixel(const Pose& pose, const Intrinsics& k, double u, double v, double near = 0.0,
                          double far = std::numeric_limits<double>::infinity()) {
  if (!(u >= 0 && u < k.width && v >= 0 && v < k.height)) {
    throw ValidationError("ray_from_pixel: pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                          ") outside " + std::to_string(k.width) + "x" + std::to_string(k.height));
  }
  require(near >= 0 && near < far, "ray_from_pixel: need 0 <= near < far");
  Ray r;
  r.o = pose.x();
  r.d = (pose.q() * k.camera_direction(u, v)).normalized();
  r.near = near;
  r.far = far;
  return r;
}

/// Camera orientation looking along `forward` with image-down roughly along -world_up.
inline Eigen::Quaterniond look_rotation(const Vec3& forward, const Vec3& world_up = Vec3::UnitZ()) {
  const Vec3 f = forward.normalized();
  Vec3 right = f.cross(world_up);
  if (right.norm() < 1e-9) right = f.unitOrthogonal();
  right.normalize();
  const Vec3 down = f.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = f;
  return Eigen::Quaterniond(r);
}

// ---- CSV rows: t, x, y, z, qw, qx, qy, qz ----

struct StampedPose {
  double t = 0.0;
  Pose pose;
};

inline std::string pose_csv_header() { return "t,x,y,z,qw,qx,qy,qz"; }

inline std::string to_csv_row(const StampedPose& s) {
  std::ostringstream os;
  os << std::setprecision(17);
  const auto& q = s.pose.q();
  const auto& x = s.pose.x();
  os << s.t << ',' << x.x() << ',' << x.y() << ',' << x.z() << ',' << q.w() << ',' << q.x() << ',' << q.y() << ','
     << q.z();
  return os.str();
}

inline std::vector<double> split_csv_numbers(const std::string& line, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ValidationError(where + ": not a number: '" + cell + "'");
    }
  }
  return out;
}

inline StampedPose parse_csv_row(const std::string& line, const std::string& where) {
  const auto v = split_csv_numbers(line, where);
  if (v.size() != 8) throw ValidationError(where + ": expected 8 columns t,x,y,z,qw,qx,qy,qz");
  try {
    return {v[0], Pose::from_wxyz(v[4], v[5], v[6], v[7], Vec3(v[1], v[2], v[3]))};
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

inline void write_pose_csv(const std::string& path, const std::vector<StampedPose>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << pose_csv_header() << '\n';
  for (const auto& r : rows) f << to_csv_row(r) << '\n';
}

inline std::vector<StampedPose> read_pose_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open " + path);
  std::vector<StampedPose> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind('t', 0) == 0) continue;  // header
    rows.push_back(parse_csv_row(line, path + ":" + std::to_string(lineno)));
  }
  return rows;
}

}  // namespace asrf
