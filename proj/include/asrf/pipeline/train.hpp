// The three optimization stages: time-pose fitting on RGB poses, RGB-only bootstrap of the field,
// and joint refinement of field and depth poses under ramped depth supervision.
#pragma once

#include "asrf/diffcore/adam.hpp"
#include "asrf/metrics/metrics.hpp"
#include "asrf/pipeline/config.hpp"
#include "asrf/timepose/linear_interp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

namespace asrf::pipeline {

using Field = field::RadianceField<float>;
using synth::AsyncDataset;
using timepose::TimePoseModel;
using timepose::TimedPoseSample;

enum class Variant { Full, NoDepth, NoJoint, RgbInit, LinearInterpInit };

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "no_depth") return Variant::NoDepth;
  if (s == "no_joint") return Variant::NoJoint;
  if (s == "rgb_init") return Variant::RgbInit;
  if (s == "linear_interp_init") return Variant::LinearInterpInit;
  throw ValidationError("unknown variant '" + s + "' (expected full, no_depth, no_joint, rgb_init or linear_interp_init)");
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoDepth: return "no_depth";
    case Variant::NoJoint: return "no_joint";
    case Variant::RgbInit: return "rgb_init";
    case Variant::LinearInterpInit: return "linear_interp_init";
  }
  return "?";
}

/// Depth weight at a stage-3 step: linear ramp from 0 over the first ramp_fraction of the stage.
inline double depth_weight_schedule(int step, const StageConfig& c) {
  require(step >= 0, "depth_weight_schedule: negative step");
  const double ramp = c.ramp_fraction * c.joint_iters;
  if (!(ramp > 0.0)) return c.lambda_depth_max;
  return c.lambda_depth_max * std::min(1.0, step / ramp);
}

struct LogPoint {
  int step = 0;
  double loss = 0.0, color = 0.0, depth = 0.0, pose = 0.0;
  double lambda_depth = 0.0, lr = 0.0;
  double rot_err = std::numeric_limits<double>::quiet_NaN();  // depth-frame pose error, when ground truth exists
  double trans_err = std::numeric_limits<double>::quiet_NaN();
};

struct StageLog {
  std::string name;
  std::vector<LogPoint> points;
  double seconds = 0.0;
};

/// Depth-frame poses under optimization. Either a time-pose model evaluated at the depth
/// timestamps, or free per-frame poses (the initialization ablations). Both describe the RGB
/// camera at t_j; the sensor pose adds the fixed extrinsic.
class DepthPoses {
 public:
  DepthPoses() = default;

  static DepthPoses from_model(TimePoseModel model, std::vector<double> times) {
    DepthPoses p;
    p.model_ = std::move(model);
    p.has_model_ = true;
    p.times_ = std::move(times);
    return p;
  }

  /// Free poses; `trans_scale` maps the shared pose learning rate to meters.
  static DepthPoses free(const std::vector<Pose>& init, std::vector<double> times, double trans_scale) {
    require(init.size() == times.size(), "DepthPoses: pose/time count mismatch");
    DepthPoses p;
    p.times_ = std::move(times);
    const auto n = init.size();
    const std::size_t bx = p.free_.add("x", {3, n});
    const std::size_t bq = p.free_.add("q", {4, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) p.free_[bx].value[3 * i + k] = init[i].x()[k];
      const auto& q = init[i].q();
      const double v[4] = {q.w(), q.x(), q.y(), q.z()};
      for (int k = 0; k < 4; ++k) p.free_[bq].value[4 * i + k] = v[k];
    }
    p.trans_scale_ = trans_scale;
    return p;
  }

  bool is_model() const { return has_model_; }
  TimePoseModel& model() { return model_; }
  const TimePoseModel& model() const { return model_; }
  diffcore::ParamStore<double>& params() { return has_model_ ? model_.params() : free_; }
  const diffcore::ParamStore<double>& free_params() const { return free_; }
  double trans_scale() const { return trans_scale_; }
  std::size_t size() const { return times_.size(); }
  const std::vector<double>& times() const { return times_; }

  struct Batch {
    std::vector<int> frames;
    Mat<double> x, q;  // 3 x F, 4 x F (unit, w first)
    timepose::TimePoseCache cache;
    Mat<double> q_raw;
    Vec<double> q_norm;
  };

  Batch forward(const std::vector<int>& frames, bool record) const {
    Batch b;
    b.frames = frames;
    const auto f = static_cast<Eigen::Index>(frames.size());
    if (has_model_) {
      std::vector<double> ts;
      for (int j : frames) ts.push_back(times_.at(static_cast<std::size_t>(j)));
      auto out = model_.forward(ts, false, record ? &b.cache : nullptr);
      b.x = std::move(out.x);
      b.q = std::move(out.q);
      return b;
    }
    b.x.resize(3, f);
    b.q.resize(4, f);
    b.q_raw.resize(4, f);
    b.q_norm.resize(f);
    const auto& xv = free_.at("x").value;
    const auto& qv = free_.at("q").value;
    for (Eigen::Index i = 0; i < f; ++i) {
      const auto j = static_cast<std::size_t>(frames[static_cast<std::size_t>(i)]);
      for (int k = 0; k < 3; ++k) b.x(k, i) = xv[3 * j + k];
      for (int k = 0; k < 4; ++k) b.q_raw(k, i) = qv[4 * j + k];
      b.q_norm[i] = b.q_raw.col(i).norm();
      require(b.q_norm[i] > 1e-12, "DepthPoses: degenerate quaternion");
      b.q.col(i) = b.q_raw.col(i) / b.q_norm[i];
    }
    return b;
  }

  void backward(const Batch& b, const Mat<double>& g_x, const Mat<double>& g_q) {
    if (has_model_) {
      model_.backward(b.cache, g_x, g_q);
      return;
    }
    auto& gx = free_.at("x").grad;
    auto& gq = free_.at("q").grad;
    for (std::size_t i = 0; i < b.frames.size(); ++i) {
      const auto j = static_cast<std::size_t>(b.frames[i]);
      const auto c = static_cast<Eigen::Index>(i);
      const Eigen::Vector4d q = b.q.col(c), g = g_q.col(c);
      const Eigen::Vector4d gr = (g - q * q.dot(g)) / b.q_norm[c];
      for (int k = 0; k < 3; ++k) gx[3 * j + k] += g_x(k, c);
      for (int k = 0; k < 4; ++k) gq[4 * j + k] += gr[k];
    }
  }

  /// RGB-camera poses at every depth timestamp.
  std::vector<Pose> camera_poses() const {
    std::vector<int> all(times_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    const Batch b = forward(all, false);
    std::vector<Pose> out;
    for (Eigen::Index i = 0; i < b.x.cols(); ++i)
      out.push_back(Pose::from_wxyz(b.q(0, i), b.q(1, i), b.q(2, i), b.q(3, i), b.x.col(i)));
    return out;
  }

  std::vector<Pose> sensor_poses(const Extrinsic& e) const {
    auto p = camera_poses();
    for (auto& v : p) v = rgb_to_depth_pose(v, e);
    return p;
  }

 private:
  TimePoseModel model_;
  bool has_model_ = false;
  diffcore::ParamStore<double> free_;
  double trans_scale_ = 1.0;
  std::vector<double> times_;
};

inline std::vector<double> depth_times(const AsyncDataset& ds) {
  std::vector<double> t;
  for (const auto& d : ds.depth) t.push_back(d.t);
  return t;
}

/// Ground-truth RGB-camera poses at the depth timestamps (empty without held-out poses).
inline std::vector<TimedPoseSample> heldout_samples(const AsyncDataset& ds) {
  std::vector<TimedPoseSample> s;
  if (ds.gt_depth_poses.empty()) return s;
  const Pose inv = invert_pose(ds.extrinsic.rgb_to_depth);
  for (std::size_t j = 0; j < ds.depth.size(); ++j) s.push_back({ds.depth[j].t, compose_pose(ds.gt_depth_poses[j], inv), std::nullopt});
  return s;
}

inline std::optional<timepose::ErrorSummary> depth_pose_errors(const std::vector<Pose>& sensor_poses, const AsyncDataset& ds) {
  if (ds.gt_depth_poses.empty()) return std::nullopt;
  require(sensor_poses.size() == ds.gt_depth_poses.size(), "depth pose count mismatch");
  std::vector<PoseError> errs;
  for (std::size_t j = 0; j < sensor_poses.size(); ++j) errs.push_back(pose_error(sensor_poses[j], ds.gt_depth_poses[j]));
  return timepose::summarize(errs);
}

/// Pose of the RGB frame nearest in time (earlier frame on ties).
inline Pose nearest_rgb_pose(const AsyncDataset& ds, double t) {
  require(!ds.rgb.empty(), "nearest_rgb_pose: no RGB frames");
  std::size_t best = 0;
  for (std::size_t i = 1; i < ds.rgb.size(); ++i)
    if (std::abs(ds.rgb[i].t - t) < std::abs(ds.rgb[best].t - t)) best = i;
  return ds.rgb[best].pose;
}

// ---------------------------------------------------------------------------------------------
// Stage 1

inline timepose::FitResult run_stage1(const AsyncDataset& ds, const RunConfig& cfg) {
  require(!ds.rgb.empty(), "stage 1: dataset has no RGB frames");
  return timepose::fit_timepose(synth::rgb_samples(ds), cfg.timepose, cfg.fit, heldout_samples(ds));
}

// ---------------------------------------------------------------------------------------------
// Ray batches

namespace detail {

struct RayBatch {
  std::vector<Ray> rays;
  std::vector<int> img;
  Mat<float> color;  // 3 x n_rgb targets, RGB rays first
  std::vector<float> depth;  // targets for the depth rays
  std::vector<int> depth_frame;  // index into the pose batch per depth ray
  std::vector<Vec3> depth_cam_dir;  // sensor-frame direction rotated into the RGB camera frame
  int n_rgb = 0;
};

inline void add_rgb_rays(const AsyncDataset& ds, int count, Rng& rng, RayBatch& b) {
  const auto& K = ds.intrinsics;
  b.color.resize(3, count);
  for (int r = 0; r < count; ++r) {
    const auto i = static_cast<std::size_t>(rng.below(ds.rgb.size()));
    const int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(K.width)));
    const int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(K.height)));
    b.rays.push_back(ray_from_pixel(ds.rgb[i].pose, K, u, v));
    b.img.push_back(static_cast<int>(i));
    const float* px = ds.rgb[i].image.px(u, v);
    for (int c = 0; c < 3; ++c) b.color(c, r) = px[c];
  }
  b.n_rgb = count;
}

/// Valid-pixel lists per depth frame; frames without valid pixels are skipped by the sampler.
struct DepthPixels {
  std::vector<std::vector<int>> valid;
  std::vector<int> usable;

  explicit DepthPixels(const AsyncDataset& ds) {
    for (std::size_t j = 0; j < ds.depth.size(); ++j) {
      std::vector<int> v;
      const auto& d = ds.depth[j].depth;
      for (std::size_t k = 0; k < d.data.size(); ++k)
        if (d.data[k] > 0.f) v.push_back(static_cast<int>(k));
      if (!v.empty()) usable.push_back(static_cast<int>(j));
      valid.push_back(std::move(v));
    }
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Stage 2

namespace detail {

inline diffcore::AdamState field_optimizer(Field& f, double lr, double embed_ratio) {
  diffcore::AdamState opt(f.params(), lr);
  opt.lr_scale.assign(f.params().num_blocks(), 1.0);
  if (f.has_appearance()) opt.lr_scale[f.params().index_of("appearance")] = embed_ratio;
  return opt;
}

inline double decayed(double lr, double final_ratio, int it, int iters) {
  if (iters <= 1) return lr;
  return lr * std::pow(final_ratio, static_cast<double>(it) / (iters - 1));
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

inline Field make_field(const AsyncDataset& ds, const RunConfig& cfg) {
  return Field(cfg.field, ds.bounds, static_cast<int>(ds.rgb.size()));
}

inline field::RenderConfig render_config(const AsyncDataset& ds, const RunConfig& cfg) {
  field::RenderConfig r = cfg.render;
  r.background = ds.background;
  return r;
}

/// RGB-only photometric training of the field (depth frames are never read).
inline StageLog bootstrap_train(Field& f, const AsyncDataset& ds, const RunConfig& cfg) {
  require(!ds.rgb.empty(), "bootstrap: dataset has no RGB frames");
  const StageConfig& sc = cfg.stages;
  const auto t0 = std::chrono::steady_clock::now();
  StageLog log{"bootstrap", {}, 0.0};
  Rng rng(sc.seed);
  auto opt = detail::field_optimizer(f, sc.lr_field, sc.lr_embed_ratio);
  const field::RenderConfig rc = render_config(ds, cfg);
  field::RenderOutput<float> out;
  field::RenderCache<float> cache;
  for (int it = 0; it < sc.bootstrap_iters; ++it) {
    detail::RayBatch b;
    detail::add_rgb_rays(ds, sc.batch_rays, rng, b);
    field::render_rays(f, b.rays, b.img, rc, &rng, out, &cache);
    const Mat<float> res = out.color - b.color;
    const double loss = static_cast<double>(res.squaredNorm()) / static_cast<double>(res.size());
    const Mat<float> g = res * static_cast<float>(2.0 * sc.lambda_color / static_cast<double>(res.size()));
    field::render_backward(f, cache, g, Mat<float>());
    opt.lr = detail::decayed(sc.lr_field, sc.lr_final_ratio, it, sc.bootstrap_iters);
    diffcore::adam_step(f.params(), opt);
    if (it % sc.log_every == 0 || it + 1 == sc.bootstrap_iters) {
      LogPoint p;
      p.step = it;
      p.color = loss;
      p.loss = sc.lambda_color * loss;
      p.lr = opt.lr;
      log.points.push_back(p);
    }
  }
  log.seconds = detail::seconds_since(t0);
  return log;
}

// ---------------------------------------------------------------------------------------------
// Stage 3

struct JointOptions {
  bool update_poses = true;
  bool use_depth = true;
};

inline JointOptions joint_options(Variant v) {
  JointOptions o;
  if (v == Variant::NoDepth) {
    o.use_depth = false;
    o.update_poses = false;
  }
  if (v == Variant::NoJoint) o.update_poses = false;
  return o;
}

/// Mixed RGB/depth batches. RGB rays use the dataset poses and a photometric term; depth rays are
/// cast from the current depth-pose estimates and carry a masked depth term whose weight follows
/// depth_weight_schedule. Pose gradients flow from ray origins/directions into `poses`.
inline StageLog joint_optimize(Field& f, DepthPoses& poses, const AsyncDataset& ds, const RunConfig& cfg,
                               const JointOptions& opt_in = {}) {
  require(!ds.rgb.empty(), "joint: dataset has no RGB frames");
  require(poses.size() == ds.depth.size(), "joint: depth pose count does not match the dataset");
  const StageConfig& sc = cfg.stages;
  JointOptions o = opt_in;
  if (sc.lambda_depth_max == 0.0) o.use_depth = false;  // reduces to continued bootstrap
  const detail::DepthPixels pixels(ds);
  if (pixels.usable.empty()) o.use_depth = false;
  if (!o.use_depth) o.update_poses = false;

  const auto t0 = std::chrono::steady_clock::now();
  StageLog log{"joint", {}, 0.0};
  Rng rng(sc.seed + 1000003);
  auto field_opt = detail::field_optimizer(f, sc.lr_field_joint, sc.lr_embed_ratio);
  diffcore::AdamState pose_opt(poses.params(), sc.lr_field_joint * sc.pose_lr_ratio);
  if (!poses.is_model()) pose_opt.lr_scale = {poses.trans_scale(), 1.0};
  std::vector<TimedPoseSample> anchor = synth::rgb_samples(ds);
  const bool anchored = o.update_poses && poses.is_model() && sc.anchor_weight > 0.0;
  if (anchored && cfg.fit.lambda_speed > 0.0) timepose::attach_velocities(anchor);
  // stage 1 kept to coarse levels; depth rays now constrain the pose between RGB samples
  if (o.update_poses && poses.is_model()) poses.model().set_active_levels(0);

  const field::RenderConfig rc = render_config(ds, cfg);
  const auto& K = ds.intrinsics;
  const Mat3 r_ext = ds.extrinsic.rgb_to_depth.rotation_matrix();
  const Vec3 x_ext = ds.extrinsic.rgb_to_depth.x();
  const double n_i = static_cast<double>(ds.rgb.size()), n_d = static_cast<double>(pixels.usable.size());
  const double inv_scale2 = 1.0 / (f.scale() * f.scale());
  field::RenderOutput<float> out;
  field::RenderCache<float> cache;

  for (int it = 0; it < sc.joint_iters; ++it) {
    const double lambda_d = o.use_depth ? depth_weight_schedule(it, sc) : 0.0;
    int n_depth = 0;
    if (o.use_depth) {
      if (sc.alternate) {
        const double share = n_d / (n_i + n_d);
        n_depth = std::floor((it + 1) * share) > std::floor(it * share) ? sc.batch_rays : 0;
      } else {
        n_depth = std::clamp(static_cast<int>(std::lround(sc.batch_rays * n_d / (n_i + n_d))), 1, sc.batch_rays - 1);
      }
    }
    const int n_rgb = sc.batch_rays - n_depth;
    const bool pose_step = o.update_poses && it >= sc.pose_start_fraction * sc.joint_iters;

    detail::RayBatch b;
    detail::add_rgb_rays(ds, n_rgb, rng, b);
    std::vector<int> frames;
    std::map<int, int> slot;
    std::vector<std::pair<int, int>> picks;  // (frame, pixel)
    std::vector<int> pool;
    if (n_depth > 0 && sc.depth_frames_per_batch > 0 &&
        static_cast<std::size_t>(sc.depth_frames_per_batch) < pixels.usable.size()) {
      for (int k = 0; k < sc.depth_frames_per_batch; ++k) {
        int j;
        do j = pixels.usable[rng.below(pixels.usable.size())];
        while (std::find(pool.begin(), pool.end(), j) != pool.end());
        pool.push_back(j);
      }
    }
    for (int r = 0; r < n_depth; ++r) {
      const int j = pool.empty() ? pixels.usable[rng.below(pixels.usable.size())] : pool[rng.below(pool.size())];
      const auto& v = pixels.valid[static_cast<std::size_t>(j)];
      const int px = v[rng.below(v.size())];
      if (!slot.count(j)) {
        slot[j] = static_cast<int>(frames.size());
        frames.push_back(j);
      }
      picks.emplace_back(j, px);
    }
    DepthPoses::Batch pb;
    std::vector<Mat3> rot;
    if (n_depth > 0) {
      pb = poses.forward(frames, pose_step);
      for (Eigen::Index c = 0; c < pb.q.cols(); ++c) rot.push_back(quat_matrix(pb.q.col(c)));
    }
    for (const auto& [j, px] : picks) {
      const int s = slot[j];
      const int u = px % K.width, v = px / K.width;
      const Vec3 cdir = r_ext * K.camera_direction(u, v);
      Ray ray;
      ray.o = pb.x.col(s) + rot[static_cast<std::size_t>(s)] * x_ext;
      ray.d = rot[static_cast<std::size_t>(s)] * cdir;
      b.rays.push_back(ray);
      b.img.push_back(-1);
      b.depth.push_back(ds.depth[static_cast<std::size_t>(j)].depth.data[static_cast<std::size_t>(px)]);
      b.depth_frame.push_back(s);
      b.depth_cam_dir.push_back(cdir);
    }

    field::render_rays(f, b.rays, b.img, rc, &rng, out, &cache);
    const auto R = static_cast<Eigen::Index>(b.rays.size());
    Mat<float> gc = Mat<float>::Zero(3, R), gd;
    double color_loss = 0.0, depth_loss = 0.0;
    if (n_rgb > 0) {
      const Mat<float> res = out.color.leftCols(n_rgb) - b.color;
      color_loss = static_cast<double>(res.squaredNorm()) / static_cast<double>(res.size());
      gc.leftCols(n_rgb) = res * static_cast<float>(2.0 * sc.lambda_color / static_cast<double>(res.size()));
    }
    if (n_depth > 0) {
      gd = Mat<float>::Zero(1, R);
      int valid = 0;
      for (int r = 0; r < n_depth; ++r)
        if (out.hit[static_cast<std::size_t>(n_rgb + r)]) ++valid;
      for (int r = 0; r < n_depth; ++r) {
        const auto col = static_cast<Eigen::Index>(n_rgb + r);
        if (!out.hit[static_cast<std::size_t>(col)] || valid == 0) continue;
        const double res = static_cast<double>(out.depth(0, col)) - b.depth[static_cast<std::size_t>(r)];
        depth_loss += res * res * inv_scale2 / valid;
        gd(0, col) = static_cast<float>(lambda_d * 2.0 * res * inv_scale2 / valid);
      }
    }
    double pose_loss = 0.0;
    if (pose_step) {
      Mat<float> g_o, g_dir;
      field::render_backward(f, cache, gc, gd, &g_o, &g_dir);
      if (anchored) {
        const auto lp = timepose::timepose_step(poses.model(), anchor, cfg.fit.lambda_speed);
        pose_loss = lp.total;
        for (auto& blk : poses.params())
          for (auto& g : blk.grad) g *= sc.anchor_weight;
        poses.model().uncertainty().zero_grad();
      }
      const auto F = static_cast<Eigen::Index>(frames.size());
      Mat<double> gx = Mat<double>::Zero(3, F), gq = Mat<double>::Zero(4, F);
      std::vector<Mat3> grot(frames.size(), Mat3::Zero());
      for (int r = 0; r < n_depth; ++r) {
        const auto col = static_cast<Eigen::Index>(n_rgb + r);
        const int s = b.depth_frame[static_cast<std::size_t>(r)];
        const Vec3 go = g_o.col(col).cast<double>(), gdv = g_dir.col(col).cast<double>();
        gx.col(s) += go;
        grot[static_cast<std::size_t>(s)] += go * x_ext.transpose() + gdv * b.depth_cam_dir[static_cast<std::size_t>(r)].transpose();
      }
      for (Eigen::Index s = 0; s < F; ++s) gq.col(s) = quat_matrix_vjp(pb.q.col(s), grot[static_cast<std::size_t>(s)]);
      poses.backward(pb, gx, gq);
    } else {
      field::render_backward(f, cache, gc, gd);
    }

    field_opt.lr = detail::decayed(sc.lr_field_joint, sc.lr_final_ratio, it, sc.joint_iters);
    diffcore::adam_step(f.params(), field_opt);
    if (pose_step) {
      pose_opt.lr = field_opt.lr * sc.pose_lr_ratio;
      diffcore::adam_step(poses.params(), pose_opt);
    }

    if (it % sc.log_every == 0 || it + 1 == sc.joint_iters) {
      LogPoint p;
      p.step = it;
      p.color = color_loss;
      p.depth = depth_loss;
      p.pose = pose_loss;
      p.lambda_depth = lambda_d;
      p.loss = sc.lambda_color * color_loss + lambda_d * depth_loss + sc.anchor_weight * pose_loss;
      p.lr = field_opt.lr;
      if (auto e = depth_pose_errors(poses.sensor_poses(ds.extrinsic), ds)) {
        p.rot_err = e->mean_rot_deg;
        p.trans_err = e->mean_trans_m;
      }
      log.points.push_back(p);
    }
  }
  log.seconds = detail::seconds_since(t0);
  return log;
}

/// Initial depth poses for a variant, given the stage-1 model.
inline DepthPoses initial_depth_poses(Variant v, const TimePoseModel& stage1, const AsyncDataset& ds) {
  const auto times = depth_times(ds);
  const double tscale = stage1.normalization().scale;
  if (v == Variant::RgbInit) {
    std::vector<Pose> init;
    for (double t : times) init.push_back(nearest_rgb_pose(ds, t));
    return DepthPoses::free(init, times, tscale);
  }
  if (v == Variant::LinearInterpInit) {
    const auto keys = synth::rgb_samples(ds);
    std::vector<Pose> init;
    for (double t : times) init.push_back(timepose::linear_interp_pose(keys, t));
    return DepthPoses::free(init, times, tscale);
  }
  return DepthPoses::from_model(stage1, times);
}

}  // namespace asrf::pipeline
