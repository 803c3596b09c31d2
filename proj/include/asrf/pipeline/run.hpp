// Evaluation on held-out views, stage checkpoints, run reports and the ablation driver.
#pragma once

#include "asrf/diffcore/checkpoint.hpp"
#include "asrf/pipeline/train.hpp"

#include <filesystem>
#include <fstream>

namespace asrf::pipeline {

// ---------------------------------------------------------------------------------------------
// Evaluation

struct ViewRender {
  synth::ImageRGB rgb;
  synth::DepthMap depth;  // 0 where opacity is below the floor or the ray misses the scene
  std::vector<float> opacity;
};

/// Deterministic full-image render (bin midpoints, quantile fine samples, mean appearance embedding).
inline ViewRender render_view(const Field& f, const Pose& pose, const Intrinsics& K, const field::RenderConfig& rc,
                              int chunk) {
  ViewRender v{synth::ImageRGB(K.width, K.height), synth::DepthMap(K.width, K.height), {}};
  v.opacity.assign(static_cast<std::size_t>(K.width) * K.height, 0.f);
  const int total = K.width * K.height;
  field::RenderOutput<float> out;
  for (int start = 0; start < total; start += chunk) {
    const int n = std::min(chunk, total - start);
    std::vector<Ray> rays;
    for (int k = start; k < start + n; ++k) rays.push_back(ray_from_pixel(pose, K, k % K.width, k / K.width));
    field::render_rays(f, rays, std::vector<int>(static_cast<std::size_t>(n), -1), rc, nullptr, out);
    for (int k = 0; k < n; ++k) {
      const int u = (start + k) % K.width, vv = (start + k) / K.width;
      float* px = v.rgb.px(u, vv);
      for (int c = 0; c < 3; ++c) px[c] = std::clamp(out.color(c, k), 0.f, 1.f);
      const float op = out.opacity(0, k);
      v.opacity[static_cast<std::size_t>(start + k)] = op;
      v.depth.at(u, vv) = out.hit[static_cast<std::size_t>(k)] && op >= rc.opacity_floor ? out.depth(0, k) : 0.f;
    }
  }
  return v;
}

struct EvalResult {
  metrics::MetricsBundle bundle;
  std::vector<metrics::ViewRow> rows;
  std::vector<ViewRender> renders;  // filled when requested
};

/// Image metrics averaged over test views; depth metrics pooled over pixels where the ground truth is
/// valid and the rendered opacity reaches the floor; pose errors over depth frames when known.
inline EvalResult evaluate(const Field& f, const AsyncDataset& ds, const RunConfig& cfg,
                           const std::vector<Pose>& depth_sensor_poses, int threads = 1, bool keep_renders = false) {
  require(!ds.test.empty(), "eval: dataset has no test views");
  const field::RenderConfig rc = render_config(ds, cfg);
  std::vector<ViewRender> renders(ds.test.size());
  parallel_for(ds.test.size(), threads, [&](std::size_t i) {
    renders[i] = render_view(f, ds.test[i].pose, ds.intrinsics, rc, cfg.eval_chunk);
  });
  EvalResult res;
  metrics::DepthAccumulator pooled;
  std::size_t pixels = 0;
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    const auto& tv = ds.test[i];
    const auto& r = renders[i];
    metrics::ViewRow row;
    row.index = i;
    row.t = tv.t;
    row.psnr = metrics::psnr(r.rgb, tv.image);
    row.ssim = metrics::ssim(r.rgb, tv.image);
    metrics::DepthAccumulator view;
    for (std::size_t k = 0; k < tv.depth.data.size(); ++k) {
      const float g = tv.depth.data[k];
      if (!(g > 0.f) || r.opacity[k] < rc.opacity_floor || !(r.depth.data[k] > 0.f)) continue;
      view.add(r.depth.data[k], g);
      pooled.add(r.depth.data[k], g);
    }
    pixels += tv.depth.data.size();
    row.valid_fraction = static_cast<double>(view.count()) / static_cast<double>(tv.depth.data.size());
    row.depth_rmse = view.count() ? view.scores().rmse : std::numeric_limits<double>::quiet_NaN();
    res.bundle.psnr += row.psnr / static_cast<double>(ds.test.size());
    res.bundle.ssim += row.ssim / static_cast<double>(ds.test.size());
    res.rows.push_back(row);
  }
  res.bundle.valid_fraction = static_cast<double>(pooled.count()) / static_cast<double>(pixels);
  if (pooled.count() > 0) {
    res.bundle.set_depth(pooled.scores());
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    res.bundle.set_depth({nan, nan, 0.0, 0.0, 0.0, 0});
  }
  res.bundle.rot_err_deg = res.bundle.trans_err_m = std::numeric_limits<double>::quiet_NaN();
  if (!depth_sensor_poses.empty()) {
    if (auto e = depth_pose_errors(depth_sensor_poses, ds)) {
      res.bundle.rot_err_deg = e->mean_rot_deg;
      res.bundle.trans_err_m = e->mean_trans_m;
    }
  }
  if (keep_renders) res.renders = std::move(renders);
  return res;
}

// ---------------------------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline void write_meta(diffcore::CheckpointWriter& w, int stage) { w.write("meta/stage", {1}, {static_cast<double>(stage)}); }

inline int read_stage(const std::map<std::string, diffcore::Record>& rec, const std::string& path) {
  auto it = rec.find("meta/stage");
  if (it == rec.end() || it->second.data.size() != 1) throw ValidationError(path + ": missing meta/stage");
  return static_cast<int>(it->second.data[0]);
}

inline void write_timepose(diffcore::CheckpointWriter& w, const TimePoseModel& m) {
  const auto& n = m.normalization();
  w.write("meta/timepose_norm", {6}, {n.t_min, n.t_max, n.center.x(), n.center.y(), n.center.z(), n.scale});
  w.write("meta/active_levels", {1}, {static_cast<double>(m.config().active_levels)});
  w.write_store("timepose", m.params());
  w.write_store("timepose_unc", m.uncertainty());
}

inline TimePoseModel read_timepose(const std::map<std::string, diffcore::Record>& rec, timepose::TimePoseConfig cfg,
                                   const std::string& path) {
  auto it = rec.find("meta/timepose_norm");
  if (it == rec.end() || it->second.data.size() != 6) throw ValidationError(path + ": missing time-pose normalization");
  const auto& d = it->second.data;
  timepose::TimePoseNormalization n{d[0], d[1], Vec3(d[2], d[3], d[4]), d[5]};
  auto al = rec.find("meta/active_levels");
  if (al != rec.end() && al->second.data.size() == 1) cfg.active_levels = static_cast<int>(al->second.data[0]);
  TimePoseModel m(cfg, n);
  diffcore::load_store(rec, "timepose", m.params());
  diffcore::load_store(rec, "timepose_unc", m.uncertainty());
  return m;
}

}  // namespace detail

inline void save_stage1(const std::string& path, const TimePoseModel& m) {
  diffcore::CheckpointWriter w(path);
  detail::write_meta(w, 1);
  detail::write_timepose(w, m);
}

inline TimePoseModel load_stage1(const std::string& path, const RunConfig& cfg) {
  const auto rec = diffcore::read_checkpoint(path);
  if (detail::read_stage(rec, path) != 1) throw ValidationError(path + ": not a stage-1 checkpoint");
  return detail::read_timepose(rec, cfg.timepose, path);
}

inline void save_stage2(const std::string& path, const Field& f) {
  diffcore::CheckpointWriter w(path);
  detail::write_meta(w, 2);
  w.write_store("field", f.params());
}

inline Field load_stage2(const std::string& path, const AsyncDataset& ds, const RunConfig& cfg) {
  const auto rec = diffcore::read_checkpoint(path);
  if (detail::read_stage(rec, path) != 2) throw ValidationError(path + ": not a stage-2 checkpoint");
  Field f = make_field(ds, cfg);
  diffcore::load_store(rec, "field", f.params());
  return f;
}

inline void save_stage3(const std::string& path, const Field& f, const DepthPoses& p, Variant v) {
  diffcore::CheckpointWriter w(path);
  detail::write_meta(w, 3);
  w.write("meta/variant", {1}, {static_cast<double>(static_cast<int>(v))});
  w.write_store("field", f.params());
  if (p.is_model()) {
    detail::write_timepose(w, p.model());
  } else {
    w.write("meta/free_trans_scale", {1}, {p.trans_scale()});
    w.write_store("free_pose", p.free_params());
  }
}

struct Stage3State {
  Field field;
  DepthPoses poses;
  Variant variant = Variant::Full;
};

/// Loads any stage checkpoint that carries a field (2 or 3). Stage-2 files yield no depth poses.
inline Stage3State load_field_checkpoint(const std::string& path, const AsyncDataset& ds, const RunConfig& cfg,
                                         int* stage_out = nullptr) {
  const auto rec = diffcore::read_checkpoint(path);
  const int stage = detail::read_stage(rec, path);
  if (stage_out) *stage_out = stage;
  if (stage != 2 && stage != 3) throw ValidationError(path + ": expected a stage-2 or stage-3 checkpoint");
  Stage3State s{make_field(ds, cfg), {}, Variant::Full};
  diffcore::load_store(rec, "field", s.field.params());
  if (stage == 2) return s;
  auto vit = rec.find("meta/variant");
  if (vit == rec.end() || vit->second.data.size() != 1) throw ValidationError(path + ": missing meta/variant");
  const int vi = static_cast<int>(vit->second.data[0]);
  if (vi < 0 || vi > static_cast<int>(Variant::LinearInterpInit)) throw ValidationError(path + ": bad variant code");
  s.variant = static_cast<Variant>(vi);
  if (rec.count("meta/timepose_norm")) {
    s.poses = DepthPoses::from_model(detail::read_timepose(rec, cfg.timepose, path), depth_times(ds));
  } else {
    auto ts = rec.find("meta/free_trans_scale");
    if (ts == rec.end() || ts->second.data.size() != 1) throw ValidationError(path + ": missing free-pose data");
    std::vector<Pose> init(ds.depth.size());
    s.poses = DepthPoses::free(init, depth_times(ds), ts->second.data[0]);
    diffcore::load_store(rec, "free_pose", s.poses.params());
  }
  return s;
}

// ---------------------------------------------------------------------------------------------
// Reports

struct RunReport {
  std::string variant;
  std::vector<StageLog> stages;
  metrics::MetricsBundle metrics;
  std::optional<timepose::ErrorSummary> initial_depth_pose;  // before stage 3
  std::optional<timepose::ErrorSummary> final_depth_pose;

  Json to_json() const {
    auto summary = [](const std::optional<timepose::ErrorSummary>& e) -> Json {
      if (!e) return nullptr;
      return Json{{"mean_rot_deg", e->mean_rot_deg}, {"mean_trans_m", e->mean_trans_m},
                  {"max_rot_deg", e->max_rot_deg}, {"max_trans_m", e->max_trans_m}, {"count", e->count}};
    };
    Json st = Json::array();
    for (const auto& s : stages) {
      const Json last = s.points.empty() ? Json(nullptr) : Json{{"step", s.points.back().step}, {"loss", s.points.back().loss}};
      st.push_back(Json{{"name", s.name}, {"log_points", s.points.size()}, {"last", last}, {"seconds", s.seconds}});
    }
    return Json{{"variant", variant},
                {"stages", st},
                {"depth_pose_error_initial", summary(initial_depth_pose)},
                {"depth_pose_error_final", summary(final_depth_pose)},
                {"metrics", metrics.to_json()}};
  }

  void write_curves_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.precision(10);
    f << "stage,step,loss,color,depth,pose,lambda_depth,lr,rot_err_deg,trans_err_m\n";
    for (const auto& s : stages)
      for (const auto& p : s.points)
        f << s.name << ',' << p.step << ',' << p.loss << ',' << p.color << ',' << p.depth << ',' << p.pose << ','
          << p.lambda_depth << ',' << p.lr << ',' << p.rot_err << ',' << p.trans_err << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
  }
};

inline StageLog stage1_log(const timepose::FitReport& r) {
  StageLog s{"timepose", {}, 0.0};
  for (const auto& lp : r.curve) {
    LogPoint p;
    p.step = lp.step;
    p.loss = lp.total;
    p.pose = lp.total;
    s.points.push_back(p);
  }
  return s;
}

/// Stage 3 for one variant from shared stage-1/2 results; returns the refined state and report.
inline std::pair<Stage3State, RunReport> run_ablation(const AsyncDataset& ds, Variant v, const RunConfig& cfg,
                                                      const TimePoseModel& stage1, const Field& stage2, int threads = 1) {
  Stage3State s{stage2, initial_depth_poses(v, stage1, ds), v};
  RunReport rep;
  rep.variant = to_string(v);
  rep.initial_depth_pose = depth_pose_errors(s.poses.sensor_poses(ds.extrinsic), ds);
  rep.stages.push_back(joint_optimize(s.field, s.poses, ds, cfg, joint_options(v)));
  const auto final_poses = s.poses.sensor_poses(ds.extrinsic);
  rep.final_depth_pose = depth_pose_errors(final_poses, ds);
  rep.metrics = evaluate(s.field, ds, cfg, final_poses, threads).bundle;
  return {std::move(s), std::move(rep)};
}

}  // namespace asrf::pipeline
