// The asynchronous RGB-D dataset: generation from (scene, trajectory, protocol) and its directory layout.
//
//   manifest.json          intrinsics, extrinsic, bounds, frame tables, provenance
//   rgb/NNNNNN.png         RGB frames
//   depth/NNNNNN.f32       depth frames (poses withheld)
//   rgb_poses.csv          RGB camera poses
//   gt_depth_poses.csv     depth-sensor poses, evaluation only
//   test/{rgb,depth}/...   novel views with ground truth, plus test_poses.csv
#pragma once

#include "asrf/json_util.hpp"
#include "asrf/synth/resample.hpp"
#include "asrf/synth/trajectory.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>

namespace asrf::synth {

struct RgbFrame {
  double t = 0.0;
  Pose pose;
  ImageRGB image;
};

struct DepthFrame {
  double t = 0.0;
  DepthMap depth;
};

struct TestView {
  double t = 0.0;
  Pose pose;  // RGB camera pose
  ImageRGB image;
  DepthMap depth;  // seen from the same camera
};

struct AsyncDataset {
  Intrinsics intrinsics;
  Extrinsic extrinsic;
  Aabb bounds;
  Vec3 background = Vec3::Zero();
  std::vector<RgbFrame> rgb;
  std::vector<DepthFrame> depth;
  std::vector<Pose> gt_depth_poses;  // empty when the held-out file is absent
  std::vector<TestView> test;
  Json provenance = Json::object();

  void validate() const {
    intrinsics.validate();
    require(!rgb.empty(), "dataset: no RGB frames");
    for (std::size_t i = 1; i < rgb.size(); ++i)
      if (!(rgb[i].t > rgb[i - 1].t)) throw ValidationError("dataset: RGB timestamps not strictly increasing at " + std::to_string(i));
    for (std::size_t i = 1; i < depth.size(); ++i)
      if (!(depth[i].t > depth[i - 1].t)) throw ValidationError("dataset: depth timestamps not strictly increasing at " + std::to_string(i));
    require(gt_depth_poses.empty() || gt_depth_poses.size() == depth.size(), "dataset: depth pose count mismatch");
  }
};

struct GenSpec {
  SceneSpec scene;
  TrajectorySpec trajectory;
  ResampleProtocol protocol;
  int width = 64, height = 64;
  double hfov_deg = 53.13;  // fx = 64 px at 64 px width
  Pose extrinsic = Pose(Eigen::Quaterniond(Eigen::AngleAxisd(deg2rad(0.5), Vec3::UnitX())), Vec3(0.1, 0.0, -0.05));
  int test_every = 10;  // one novel view per this many RGB frames; 0 disables
};

inline Json intrinsics_json(const Intrinsics& k) {
  return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"w", k.width}, {"h", k.height}};
}

inline Json pose_row_json(const Pose& p) {
  return Json::array({p.x().x(), p.x().y(), p.x().z(), p.q().w(), p.q().x(), p.q().y(), p.q().z()});
}

inline Pose json_pose_row(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 7) throw ValidationError(where + ": expected [x,y,z,qw,qx,qy,qz]");
  try {
    return Pose::from_wxyz(j[3].get<double>(), j[4].get<double>(), j[5].get<double>(), j[6].get<double>(),
                           Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

/// Renders every frame the protocol needs. `threads` > 1 renders frames in parallel (output unchanged).
inline AsyncDataset generate_dataset(const GenSpec& g, int threads = 1, ResamplePlan* plan_out = nullptr) {
  require(g.test_every >= 0, "gen: test_every must be >= 0");
  const Scene scene = build_scene(g.scene);
  const auto base = gen_trajectory(g.trajectory, scene.bounds);
  const ResamplePlan plan = plan_resample(base.size(), g.protocol);
  if (plan_out) *plan_out = plan;

  AsyncDataset ds;
  ds.intrinsics = Intrinsics::from_fov(g.width, g.height, g.hfov_deg);
  ds.extrinsic.rgb_to_depth = g.extrinsic;
  ds.bounds = scene.bounds;
  ds.background = scene.spec.background;
  ds.rgb.resize(plan.rgb.size());
  ds.depth.resize(plan.depth.size());
  ds.gt_depth_poses.resize(plan.depth.size());

  std::vector<std::size_t> test_base;
  if (g.test_every > 0) {
    const auto half = static_cast<std::size_t>(g.protocol.rgb_stride / 2);
    for (std::size_t i = 0; i < plan.rgb.size(); i += static_cast<std::size_t>(g.test_every)) {
      const std::size_t b = plan.rgb[i] + half;
      if (b < base.size() && half > 0) test_base.push_back(b);
    }
  }
  ds.test.resize(test_base.size());

  const std::size_t n_rgb = ds.rgb.size(), n_depth = ds.depth.size();
  parallel_for(n_rgb + n_depth + ds.test.size(), threads, [&](std::size_t k) {
    if (k < n_rgb) {
      const auto& s = base[plan.rgb[k]];
      ds.rgb[k] = {s.t, s.pose, gt_render(scene, s.pose, ds.intrinsics).rgb};
      quantize(ds.rgb[k].image);
    } else if (k < n_rgb + n_depth) {
      const std::size_t j = k - n_rgb;
      const auto& s = base[plan.depth[j].base_index];
      const Pose dp = rgb_to_depth_pose(s.pose, ds.extrinsic);
      ds.depth[j] = {s.t, gt_render(scene, dp, ds.intrinsics).depth};
      ds.gt_depth_poses[j] = dp;
    } else {
      const std::size_t j = k - n_rgb - n_depth;
      const auto& s = base[test_base[j]];
      auto f = gt_render(scene, s.pose, ds.intrinsics);
      quantize(f.rgb);
      ds.test[j] = {s.t, s.pose, std::move(f.rgb), std::move(f.depth)};
    }
  });
  ds.provenance = Json{{"base_frames", base.size()},
                       {"rgb_frames", ds.rgb.size()},
                       {"depth_frames", ds.depth.size()},
                       {"dropped_past_end", plan.dropped_past_end},
                       {"dropped_non_monotone", plan.dropped_non_monotone},
                       {"boxes", scene.boxes.size()}};
  ds.validate();
  return ds;
}

namespace detail {
inline std::string frame_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.%s", i, ext);
  return buf;
}
}  // namespace detail

inline void save_dataset(const AsyncDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  ds.validate();
  fs::create_directories(fs::path(dir) / "rgb");
  fs::create_directories(fs::path(dir) / "depth");
  Json m;
  m["format"] = "asrf-dataset-1";
  m["intrinsics"] = intrinsics_json(ds.intrinsics);
  m["extrinsic"] = pose_row_json(ds.extrinsic.rgb_to_depth);
  m["bounds"] = Json{{"min", vec3_json(ds.bounds.min)}, {"max", vec3_json(ds.bounds.max)}};
  m["background"] = vec3_json(ds.background);
  Json rgb = Json::array(), depth = Json::array(), test = Json::array();
  std::vector<StampedPose> rgb_poses, depth_poses, test_poses;
  for (std::size_t i = 0; i < ds.rgb.size(); ++i) {
    const std::string f = "rgb/" + detail::frame_name(i, "png");
    write_png((fs::path(dir) / f).string(), ds.rgb[i].image);
    rgb.push_back(Json{{"t", ds.rgb[i].t}, {"file", f}});
    rgb_poses.push_back({ds.rgb[i].t, ds.rgb[i].pose});
  }
  for (std::size_t i = 0; i < ds.depth.size(); ++i) {
    const std::string f = "depth/" + detail::frame_name(i, "f32");
    write_depth((fs::path(dir) / f).string(), ds.depth[i].depth);
    depth.push_back(Json{{"t", ds.depth[i].t}, {"file", f}});
    if (!ds.gt_depth_poses.empty()) depth_poses.push_back({ds.depth[i].t, ds.gt_depth_poses[i]});
  }
  if (!ds.test.empty()) {
    fs::create_directories(fs::path(dir) / "test" / "rgb");
    fs::create_directories(fs::path(dir) / "test" / "depth");
  }
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    const std::string fr = "test/rgb/" + detail::frame_name(i, "png");
    const std::string fd = "test/depth/" + detail::frame_name(i, "f32");
    write_png((fs::path(dir) / fr).string(), ds.test[i].image);
    write_depth((fs::path(dir) / fd).string(), ds.test[i].depth);
    test.push_back(Json{{"t", ds.test[i].t}, {"rgb", fr}, {"depth", fd}});
    test_poses.push_back({ds.test[i].t, ds.test[i].pose});
  }
  m["rgb"] = rgb;
  m["depth"] = depth;
  m["test"] = test;
  m["provenance"] = ds.provenance;
  write_json_file((fs::path(dir) / "manifest.json").string(), m);
  write_pose_csv((fs::path(dir) / "rgb_poses.csv").string(), rgb_poses);
  if (!ds.gt_depth_poses.empty()) write_pose_csv((fs::path(dir) / "gt_depth_poses.csv").string(), depth_poses);
  if (!ds.test.empty()) write_pose_csv((fs::path(dir) / "test_poses.csv").string(), test_poses);
}

namespace detail {

inline std::vector<StampedPose> read_matching_csv(const std::string& path, const std::vector<double>& ts) {
  const auto rows = read_pose_csv(path);
  if (rows.size() != ts.size()) {
    throw ValidationError(path + ": " + std::to_string(rows.size()) + " rows but manifest lists " +
                          std::to_string(ts.size()) + " frames");
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].t != ts[i]) {
      throw ValidationError(path + ":" + std::to_string(i + 2) + ": timestamp disagrees with manifest");
    }
  }
  return rows;
}

inline double frame_time(const Json& e, const std::string& where) {
  if (!e.is_object() || !e.contains("t") || !e["t"].is_number())
    throw ValidationError(where + ": missing numeric field 't'");
  return e["t"].get<double>();
}

inline std::string frame_file(const Json& e, const char* key, const std::string& where) {
  if (!e.contains(key) || !e[key].is_string()) throw ValidationError(where + ": missing string field '" + key + "'");
  return e[key].get<std::string>();
}

}  // namespace detail

inline AsyncDataset load_dataset(const std::string& dir, bool with_images = true) {
  namespace fs = std::filesystem;
  const std::string mpath = (fs::path(dir) / "manifest.json").string();
  const Json m = read_json_file(mpath);
  JsonReader r(m, mpath);
  std::string format;
  r.require_field("format", format);
  if (format != "asrf-dataset-1") throw ValidationError(mpath + ": unsupported format '" + format + "'");
  for (const char* key : {"intrinsics", "extrinsic", "bounds", "background", "rgb", "depth"}) {
    if (!r.has(key)) throw ValidationError(mpath + ": missing field '" + std::string(key) + "'");
  }
  AsyncDataset ds;
  {
    JsonReader k(*r.child("intrinsics"), mpath + ":intrinsics");
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int w = 0, h = 0;
    k.require_field("fx", fx);
    k.require_field("fy", fy);
    k.require_field("cx", cx);
    k.require_field("cy", cy);
    k.require_field("w", w);
    k.require_field("h", h);
    k.finish();
    try {
      ds.intrinsics = Intrinsics(fx, fy, cx, cy, w, h);
    } catch (const ValidationError& e) {
      throw ValidationError(mpath + ":intrinsics: " + e.what());
    }
  }
  ds.extrinsic.rgb_to_depth = json_pose_row(*r.child("extrinsic"), mpath + ":extrinsic");
  {
    JsonReader b(*r.child("bounds"), mpath + ":bounds");
    Json lo, hi;
    b.require_field("min", lo);
    b.require_field("max", hi);
    b.finish();
    ds.bounds.min = json_vec3(lo, mpath + ":bounds.min");
    ds.bounds.max = json_vec3(hi, mpath + ":bounds.max");
    if (!(ds.bounds.min.array() < ds.bounds.max.array()).all()) throw ValidationError(mpath + ":bounds: min must be < max");
  }
  ds.background = json_vec3(*r.child("background"), mpath + ":background");
  const Json& rgb = *r.child("rgb");
  const Json& depth = *r.child("depth");
  const Json* test = r.child("test");
  if (const Json* p = r.child("provenance")) ds.provenance = *p;
  r.finish();
  if (!rgb.is_array() || !depth.is_array()) throw ValidationError(mpath + ": rgb/depth must be arrays");

  auto check_size = [&](int w, int h, const std::string& f) {
    if (w != ds.intrinsics.width || h != ds.intrinsics.height)
      throw ValidationError(f + ": raster size does not match intrinsics");
  };
  std::vector<double> rgb_t, depth_t, test_t;
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const std::string where = mpath + ":rgb[" + std::to_string(i) + "]";
    RgbFrame f;
    f.t = detail::frame_time(rgb[i], where);
    if (with_images) {
      const std::string file = (fs::path(dir) / detail::frame_file(rgb[i], "file", where)).string();
      f.image = read_png(file);
      check_size(f.image.width, f.image.height, file);
    }
    rgb_t.push_back(f.t);
    ds.rgb.push_back(std::move(f));
  }
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const std::string where = mpath + ":depth[" + std::to_string(i) + "]";
    DepthFrame f;
    f.t = detail::frame_time(depth[i], where);
    if (with_images) {
      const std::string file = (fs::path(dir) / detail::frame_file(depth[i], "file", where)).string();
      f.depth = read_depth(file);
      check_size(f.depth.width, f.depth.height, file);
    }
    depth_t.push_back(f.t);
    ds.depth.push_back(std::move(f));
  }
  const auto rgb_poses = detail::read_matching_csv((fs::path(dir) / "rgb_poses.csv").string(), rgb_t);
  for (std::size_t i = 0; i < rgb_poses.size(); ++i) ds.rgb[i].pose = rgb_poses[i].pose;
  const fs::path gt = fs::path(dir) / "gt_depth_poses.csv";
  if (fs::exists(gt)) {
    for (const auto& row : detail::read_matching_csv(gt.string(), depth_t)) ds.gt_depth_poses.push_back(row.pose);
  }
  if (test && !test->empty()) {
    if (!test->is_array()) throw ValidationError(mpath + ": test must be an array");
    for (std::size_t i = 0; i < test->size(); ++i) {
      const std::string where = mpath + ":test[" + std::to_string(i) + "]";
      TestView v;
      v.t = detail::frame_time((*test)[i], where);
      if (with_images) {
        const std::string fr = (fs::path(dir) / detail::frame_file((*test)[i], "rgb", where)).string();
        const std::string fd = (fs::path(dir) / detail::frame_file((*test)[i], "depth", where)).string();
        v.image = read_png(fr);
        v.depth = read_depth(fd);
        check_size(v.image.width, v.image.height, fr);
        check_size(v.depth.width, v.depth.height, fd);
      }
      test_t.push_back(v.t);
      ds.test.push_back(std::move(v));
    }
    const auto tp = detail::read_matching_csv((fs::path(dir) / "test_poses.csv").string(), test_t);
    for (std::size_t i = 0; i < tp.size(); ++i) ds.test[i].pose = tp[i].pose;
  }
  try {
    ds.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(mpath + ": " + e.what());
  }
  return ds;
}

/// RGB frames as time-pose training samples.
inline std::vector<TimedPoseSample> rgb_samples(const AsyncDataset& ds) {
  std::vector<TimedPoseSample> s;
  for (const auto& f : ds.rgb) s.push_back({f.t, f.pose, std::nullopt});
  return s;
}

}  // namespace asrf::synth
