// Run configuration: one JSON document covering data generation, the three stages and evaluation.
// Unknown keys are rejected. Environment variables ASRF_<SECTION>__<KEY>=<json> override entries;
// "__" separates nesting levels and names are lower-cased.
#pragma once

#include "asrf/field/render.hpp"
#include "asrf/json_util.hpp"
#include "asrf/synth/dataset.hpp"
#include "asrf/timepose/fit.hpp"

#include <algorithm>
#include <cctype>
#include <map>

extern char** environ;

namespace asrf::pipeline {

struct StageConfig {
  // stage 2
  int bootstrap_iters = 1500;
  double lr_field = 5e-3;
  // stage 3
  int joint_iters = 1500;
  double lr_field_joint = 2e-3;
  double pose_lr_ratio = 0.1;  // phi learning rate = this * current theta learning rate
  double lr_final_ratio = 0.1;  // exponential decay over each stage
  double lr_embed_ratio = 1.0;  // appearance embeddings relative to theta
  int batch_rays = 384;
  double lambda_color = 1.0;
  double lambda_depth_max = 10.0;  // on depth residuals normalized by the scene half-extent
  double ramp_fraction = 0.5;
  // Adam steps do not shrink with the loss weight, so poses stay fixed until this fraction of
  // stage 3 has passed (by default the end of the depth ramp).
  double pose_start_fraction = 0.5;
  bool alternate = false;  // one modality per step instead of mixed batches
  double anchor_weight = 1.0;  // keeps the stage-1 RGB pose objective active while phi moves
  // Depth rays per step come from this many frames (0: any frame), so each sampled pose sees a
  // gradient from many pixels instead of one or two.
  int depth_frames_per_batch = 8;
  int log_every = 50;
  std::uint64_t seed = 21;

  void validate() const {
    require(bootstrap_iters >= 0 && joint_iters >= 0, "stages: iteration counts must be >= 0");
    require(batch_rays >= 2, "stages: batch_rays must be >= 2");
    require(lr_field > 0 && lr_field_joint > 0 && pose_lr_ratio >= 0 && lr_embed_ratio >= 0, "stages: bad learning rates");
    require(lr_final_ratio > 0 && lr_final_ratio <= 1, "stages: lr_final_ratio must lie in (0, 1]");
    require(ramp_fraction > 0 && ramp_fraction <= 1, "stages: ramp_fraction must lie in (0, 1]");
    require(pose_start_fraction >= 0 && pose_start_fraction < 1, "stages: pose_start_fraction must lie in [0, 1)");
    require(lambda_color >= 0 && lambda_depth_max >= 0 && anchor_weight >= 0, "stages: negative loss weight");
    require(log_every >= 1, "stages: log_every must be >= 1");
    require(depth_frames_per_batch >= 0, "stages: depth_frames_per_batch must be >= 0");
  }
};

struct RunConfig {
  synth::GenSpec gen;
  timepose::TimePoseConfig timepose;
  timepose::FitConfig fit;
  field::FieldConfig field;
  field::RenderConfig render;
  StageConfig stages;
  int eval_chunk = 4096;  // rays per evaluation batch

  void validate() const {
    gen.trajectory.validate();
    gen.protocol.validate();
    timepose.validate();
    field.validate();
    render.validate();
    stages.validate();
    require(eval_chunk >= 1, "eval_chunk must be >= 1");
  }
};

namespace detail {

inline void read_vec3(JsonReader& r, const std::string& key, Vec3& v) {
  if (const Json* j = r.child(key)) v = json_vec3(*j, r.path(key));
}

inline void read_scene(const Json& j, synth::SceneSpec& s) {
  JsonReader r(j, "scene");
  r.get("seed", s.seed);
  r.get("half_extent", s.half_extent);
  r.get("max_height", s.max_height);
  r.get("box_count", s.box_count);
  r.get("box_min_size", s.box_min_size);
  r.get("box_max_size", s.box_max_size);
  r.get("box_min_height", s.box_min_height);
  r.get("box_max_height", s.box_max_height);
  r.get("box_gap", s.box_gap);
  r.get("checker", s.checker);
  read_vec3(r, "ground_a", s.ground_a);
  read_vec3(r, "ground_b", s.ground_b);
  read_vec3(r, "background", s.background);
  r.finish();
}

inline Json scene_json(const synth::SceneSpec& s) {
  return Json{{"seed", s.seed},
              {"half_extent", s.half_extent},
              {"max_height", s.max_height},
              {"box_count", s.box_count},
              {"box_min_size", s.box_min_size},
              {"box_max_size", s.box_max_size},
              {"box_min_height", s.box_min_height},
              {"box_max_height", s.box_max_height},
              {"box_gap", s.box_gap},
              {"checker", s.checker},
              {"ground_a", vec3_json(s.ground_a)},
              {"ground_b", vec3_json(s.ground_b)},
              {"background", vec3_json(s.background)}};
}

inline void read_trajectory(const Json& j, synth::TrajectorySpec& t) {
  JsonReader r(j, "trajectory");
  std::string kind = synth::to_string(t.kind);
  r.get("kind", kind);
  t.kind = synth::parse_trajectory_kind(kind);
  r.get("duration", t.duration);
  r.get("rate", t.rate);
  r.get("altitude_min", t.altitude_min);
  r.get("altitude_max", t.altitude_max);
  r.get("max_speed", t.max_speed);
  r.get("seed", t.seed);
  r.get("extent", t.extent);
  r.get("legs", t.legs);
  r.get("pitch_deg", t.pitch_deg);
  r.get("pitch_var_deg", t.pitch_var_deg);
  r.get("waypoint_sep", t.waypoint_sep);
  r.get("heading_lookahead", t.heading_lookahead);
  r.get("sway_amplitude", t.sway_amplitude);
  r.get("sway_angle_deg", t.sway_angle_deg);
  r.get("sway_freq_lo", t.sway_freq_lo);
  r.get("sway_freq_hi", t.sway_freq_hi);
  r.get("sway_components", t.sway_components);
  r.finish();
}

inline Json trajectory_json(const synth::TrajectorySpec& t) {
  return Json{{"kind", synth::to_string(t.kind)},
              {"duration", t.duration},
              {"rate", t.rate},
              {"altitude_min", t.altitude_min},
              {"altitude_max", t.altitude_max},
              {"max_speed", t.max_speed},
              {"seed", t.seed},
              {"extent", t.extent},
              {"legs", t.legs},
              {"pitch_deg", t.pitch_deg},
              {"pitch_var_deg", t.pitch_var_deg},
              {"waypoint_sep", t.waypoint_sep},
              {"heading_lookahead", t.heading_lookahead},
              {"sway_amplitude", t.sway_amplitude},
              {"sway_angle_deg", t.sway_angle_deg},
              {"sway_freq_lo", t.sway_freq_lo},
              {"sway_freq_hi", t.sway_freq_hi},
              {"sway_components", t.sway_components}};
}

inline void read_protocol(const Json& j, synth::ResampleProtocol& p) {
  JsonReader r(j, "protocol");
  std::string mode = synth::to_string(p.mode);
  r.get("mode", mode);
  p.mode = synth::parse_resample_mode(mode);
  r.get("rgb_stride", p.rgb_stride);
  r.get("x", p.x);
  r.get("y", p.y);
  r.get("seed", p.seed);
  r.finish();
}

inline Json protocol_json(const synth::ResampleProtocol& p) {
  return Json{{"mode", synth::to_string(p.mode)}, {"rgb_stride", p.rgb_stride}, {"x", p.x}, {"y", p.y}, {"seed", p.seed}};
}

inline void read_camera(const Json& j, synth::GenSpec& g) {
  JsonReader r(j, "camera");
  r.get("width", g.width);
  r.get("height", g.height);
  r.get("hfov_deg", g.hfov_deg);
  r.get("test_every", g.test_every);
  if (const Json* e = r.child("extrinsic")) g.extrinsic = synth::json_pose_row(*e, "camera.extrinsic");
  r.finish();
}

inline Json camera_json(const synth::GenSpec& g) {
  return Json{{"width", g.width},
              {"height", g.height},
              {"hfov_deg", g.hfov_deg},
              {"test_every", g.test_every},
              {"extrinsic", synth::pose_row_json(g.extrinsic)}};
}

inline void read_timepose(const Json& j, timepose::TimePoseConfig& c) {
  JsonReader r(j, "timepose");
  r.get("levels", c.levels);
  r.get("base_resolution", c.base_resolution);
  r.get("growth", c.growth);
  r.get("features", c.features);
  r.get("max_dense_nodes", c.max_dense_nodes);
  r.get("hash_table_size", c.hash_table_size);
  r.get("force_hash", c.force_hash);
  r.get("hidden_width", c.hidden_width);
  r.get("hidden_layers", c.hidden_layers);
  r.get("skip_layer", c.skip_layer);
  r.get("feature_init", c.feature_init);
  r.get("active_levels", c.active_levels);
  r.get("seed", c.seed);
  r.finish();
}

inline Json timepose_json(const timepose::TimePoseConfig& c) {
  return Json{{"levels", c.levels},
              {"base_resolution", c.base_resolution},
              {"growth", c.growth},
              {"features", c.features},
              {"max_dense_nodes", c.max_dense_nodes},
              {"hash_table_size", c.hash_table_size},
              {"force_hash", c.force_hash},
              {"hidden_width", c.hidden_width},
              {"hidden_layers", c.hidden_layers},
              {"skip_layer", c.skip_layer},
              {"feature_init", c.feature_init},
              {"active_levels", c.active_levels},
              {"seed", c.seed}};
}

inline void read_fit(const Json& j, timepose::FitConfig& c) {
  JsonReader r(j, "timepose_fit");
  r.get("iters", c.iters);
  r.get("lr", c.lr);
  r.get("lr_final_ratio", c.lr_final_ratio);
  r.get("lr_uncertainty", c.lr_uncertainty);
  r.get("lambda_speed", c.lambda_speed);
  r.get("batch_size", c.batch_size);
  r.get("log_every", c.log_every);
  r.get("seed", c.seed);
  r.get("continuous_warmup", c.continuous_warmup);
  r.finish();
}

inline Json fit_json(const timepose::FitConfig& c) {
  return Json{{"iters", c.iters},
              {"lr", c.lr},
              {"lr_final_ratio", c.lr_final_ratio},
              {"lr_uncertainty", c.lr_uncertainty},
              {"lambda_speed", c.lambda_speed},
              {"batch_size", c.batch_size},
              {"log_every", c.log_every},
              {"seed", c.seed},
              {"continuous_warmup", c.continuous_warmup}};
}

inline void read_field(const Json& j, field::FieldConfig& c) {
  JsonReader r(j, "field");
  r.get("tiles_x", c.tiles_x);
  r.get("tiles_y", c.tiles_y);
  r.get("pos_freq", c.pos_freq);
  r.get("dir_freq", c.dir_freq);
  r.get("density_width", c.density_width);
  r.get("density_layers", c.density_layers);
  r.get("feature_width", c.feature_width);
  r.get("color_width", c.color_width);
  r.get("color_layers", c.color_layers);
  r.get("appearance", c.appearance);
  r.get("appearance_dim", c.appearance_dim);
  r.get("density_bias", c.density_bias);
  r.get("seed", c.seed);
  r.finish();
}

inline Json field_json(const field::FieldConfig& c) {
  return Json{{"tiles_x", c.tiles_x},
              {"tiles_y", c.tiles_y},
              {"pos_freq", c.pos_freq},
              {"dir_freq", c.dir_freq},
              {"density_width", c.density_width},
              {"density_layers", c.density_layers},
              {"feature_width", c.feature_width},
              {"color_width", c.color_width},
              {"color_layers", c.color_layers},
              {"appearance", c.appearance},
              {"appearance_dim", c.appearance_dim},
              {"density_bias", c.density_bias},
              {"seed", c.seed}};
}

inline void read_render(const Json& j, field::RenderConfig& c) {
  JsonReader r(j, "render");
  r.get("n_coarse", c.n_coarse);
  r.get("n_fine", c.n_fine);
  r.get("jitter", c.jitter);
  r.get("min_near", c.min_near);
  r.get("opacity_floor", c.opacity_floor);
  r.finish();
}

inline Json render_json(const field::RenderConfig& c) {
  return Json{{"n_coarse", c.n_coarse},
              {"n_fine", c.n_fine},
              {"jitter", c.jitter},
              {"min_near", c.min_near},
              {"opacity_floor", c.opacity_floor}};
}

inline void read_stages(const Json& j, StageConfig& c) {
  JsonReader r(j, "stages");
  r.get("bootstrap_iters", c.bootstrap_iters);
  r.get("lr_field", c.lr_field);
  r.get("joint_iters", c.joint_iters);
  r.get("lr_field_joint", c.lr_field_joint);
  r.get("pose_lr_ratio", c.pose_lr_ratio);
  r.get("lr_final_ratio", c.lr_final_ratio);
  r.get("lr_embed_ratio", c.lr_embed_ratio);
  r.get("batch_rays", c.batch_rays);
  r.get("lambda_color", c.lambda_color);
  r.get("lambda_depth_max", c.lambda_depth_max);
  r.get("ramp_fraction", c.ramp_fraction);
  r.get("pose_start_fraction", c.pose_start_fraction);
  r.get("alternate", c.alternate);
  r.get("anchor_weight", c.anchor_weight);
  r.get("depth_frames_per_batch", c.depth_frames_per_batch);
  r.get("log_every", c.log_every);
  r.get("seed", c.seed);
  r.finish();
}

inline Json stages_json(const StageConfig& c) {
  return Json{{"bootstrap_iters", c.bootstrap_iters},
              {"lr_field", c.lr_field},
              {"joint_iters", c.joint_iters},
              {"lr_field_joint", c.lr_field_joint},
              {"pose_lr_ratio", c.pose_lr_ratio},
              {"lr_final_ratio", c.lr_final_ratio},
              {"lr_embed_ratio", c.lr_embed_ratio},
              {"batch_rays", c.batch_rays},
              {"lambda_color", c.lambda_color},
              {"lambda_depth_max", c.lambda_depth_max},
              {"ramp_fraction", c.ramp_fraction},
              {"pose_start_fraction", c.pose_start_fraction},
              {"alternate", c.alternate},
              {"anchor_weight", c.anchor_weight},
              {"depth_frames_per_batch", c.depth_frames_per_batch},
              {"log_every", c.log_every},
              {"seed", c.seed}};
}

}  // namespace detail

inline RunConfig parse_config(const Json& j) {
  RunConfig c;
  JsonReader r(j, "config");
  if (const Json* s = r.child("scene")) detail::read_scene(*s, c.gen.scene);
  if (const Json* s = r.child("trajectory")) detail::read_trajectory(*s, c.gen.trajectory);
  if (const Json* s = r.child("protocol")) detail::read_protocol(*s, c.gen.protocol);
  if (const Json* s = r.child("camera")) detail::read_camera(*s, c.gen);
  if (const Json* s = r.child("timepose")) detail::read_timepose(*s, c.timepose);
  if (const Json* s = r.child("timepose_fit")) detail::read_fit(*s, c.fit);
  if (const Json* s = r.child("field")) detail::read_field(*s, c.field);
  if (const Json* s = r.child("render")) detail::read_render(*s, c.render);
  if (const Json* s = r.child("stages")) detail::read_stages(*s, c.stages);
  r.get("eval_chunk", c.eval_chunk);
  r.finish();
  c.validate();
  return c;
}

/// Fully resolved config (every field explicit), suitable for provenance and reloading.
inline Json config_json(const RunConfig& c) {
  return Json{{"scene", detail::scene_json(c.gen.scene)},
              {"trajectory", detail::trajectory_json(c.gen.trajectory)},
              {"protocol", detail::protocol_json(c.gen.protocol)},
              {"camera", detail::camera_json(c.gen)},
              {"timepose", detail::timepose_json(c.timepose)},
              {"timepose_fit", detail::fit_json(c.fit)},
              {"field", detail::field_json(c.field)},
              {"render", detail::render_json(c.render)},
              {"stages", detail::stages_json(c.stages)},
              {"eval_chunk", c.eval_chunk}};
}

/// Applies one override: `path` is a list of keys, `text` is parsed as JSON when possible and
/// otherwise taken as a string.
inline void apply_override(Json& j, const std::vector<std::string>& path, const std::string& text) {
  require(!path.empty(), "config override: empty key");
  Json* node = &j;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->is_object()) throw ValidationError("config override: '" + path[i] + "' is not an object");
    node = &(*node)[path[i]];
    if (node->is_null()) *node = Json::object();
  }
  if (!node->is_object()) throw ValidationError("config override: parent of '" + path.back() + "' is not an object");
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  (*node)[path.back()] = value;
}

/// ASRF_* variables from `env` (NAME=VALUE strings). Returns the names applied, in sorted order.
inline std::vector<std::string> apply_env_overrides(Json& j, const std::vector<std::string>& env) {
  std::map<std::string, std::string> found;
  for (const auto& kv : env) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || kv.rfind("ASRF_", 0) != 0) continue;
    found[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  std::vector<std::string> applied;
  for (const auto& [name, value] : found) {
    std::string rest = name.substr(5);
    std::transform(rest.begin(), rest.end(), rest.begin(), [](unsigned char ch) { return std::tolower(ch); });
    std::vector<std::string> path;
    std::size_t pos = 0;
    while (true) {
      const auto sep = rest.find("__", pos);
      path.push_back(rest.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos));
      if (sep == std::string::npos) break;
      pos = sep + 2;
    }
    for (const auto& p : path)
      if (p.empty()) throw ValidationError("config override " + name + ": empty key segment");
    apply_override(j, path, value);
    applied.push_back(name);
  }
  return applied;
}

inline std::vector<std::string> process_environment() {
  std::vector<std::string> out;
  for (char** e = environ; e && *e; ++e) out.emplace_back(*e);
  return out;
}

}  // namespace asrf::pipeline
