#include "asrf/diffcore/gradcheck.hpp"
#include "asrf/pipeline/run.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace asrf;
using namespace asrf::pipeline;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.gen.scene.box_count = 6;
  c.gen.trajectory.duration = 20;
  c.gen.trajectory.legs = 2;
  c.gen.protocol.rgb_stride = 25;
  c.gen.width = 12;
  c.gen.height = 12;
  c.gen.test_every = 5;
  c.timepose.levels = 3;
  c.timepose.base_resolution = 4;
  c.timepose.hidden_width = 16;
  c.timepose.hidden_layers = 2;
  c.timepose.skip_layer = 1;
  c.fit.iters = 40;
  c.fit.log_every = 10;
  c.field.tiles_x = 1;
  c.field.tiles_y = 1;
  c.field.density_width = 16;
  c.field.density_layers = 2;
  c.field.feature_width = 16;
  c.field.color_width = 8;
  c.field.color_layers = 1;
  c.render.n_coarse = 8;
  c.render.n_fine = 4;
  c.stages.bootstrap_iters = 6;
  c.stages.joint_iters = 8;
  c.stages.batch_rays = 32;
  c.stages.log_every = 4;
  return c;
}

const AsyncDataset& tiny_dataset() {
  static const AsyncDataset ds = synth::generate_dataset(tiny_config().gen, 1);
  return ds;
}

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST(Schedule, RampsLinearlyThenHolds) {
  StageConfig c;
  c.joint_iters = 100;
  c.ramp_fraction = 0.4;
  c.lambda_depth_max = 8;
  EXPECT_EQ(depth_weight_schedule(0, c), 0.0);
  EXPECT_NEAR(depth_weight_schedule(20, c), 4.0, 1e-12);
  EXPECT_EQ(depth_weight_schedule(40, c), 8.0);
  EXPECT_EQ(depth_weight_schedule(99, c), 8.0);
  EXPECT_THROW(depth_weight_schedule(-1, c), ValidationError);
}

TEST(Variants, ParseAndOptions) {
  for (auto v : {Variant::Full, Variant::NoDepth, Variant::NoJoint, Variant::RgbInit, Variant::LinearInterpInit})
    EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("everything"), ValidationError);
  EXPECT_FALSE(joint_options(Variant::NoDepth).use_depth);
  EXPECT_FALSE(joint_options(Variant::NoJoint).update_poses);
  EXPECT_TRUE(joint_options(Variant::NoJoint).use_depth);
  EXPECT_TRUE(joint_options(Variant::RgbInit).update_poses);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_NO_THROW(parse_config(Json::object()));
  EXPECT_THROW(parse_config(Json{{"stages", {{"joint_iterz", 3}}}}), ValidationError);
  EXPECT_THROW(parse_config(Json{{"colour", 1}}), ValidationError);
  EXPECT_THROW(parse_config(Json{{"stages", {{"ramp_fraction", 0.0}}}}), ValidationError);
  EXPECT_THROW(parse_config(Json{{"stages", {{"batch_rays", "many"}}}}), ValidationError);
}

TEST(Config, ResolvedJsonRoundTrips) {
  const RunConfig a = tiny_config();
  const Json j = config_json(a);
  const RunConfig b = parse_config(j);
  EXPECT_EQ(config_json(b), j);
}

TEST(Config, EnvironmentOverridesNestedKeys) {
  Json j = config_json(RunConfig{});
  const auto applied = apply_env_overrides(
      j, {"ASRF_STAGES__JOINT_ITERS=77", "ASRF_PROTOCOL__MODE=random", "HOME=/root", "ASRF_FIELD__APPEARANCE=false"});
  EXPECT_EQ(applied.size(), 3u);
  const RunConfig c = parse_config(j);
  EXPECT_EQ(c.stages.joint_iters, 77);
  EXPECT_EQ(c.gen.protocol.mode, synth::ResampleMode::Random);
  EXPECT_FALSE(c.field.appearance);
  Json k = Json::object();
  EXPECT_THROW(apply_env_overrides(k, {"ASRF_STAGES____X=1"}), ValidationError);
}

TEST(DepthPoses, FreePoseGradientsMatchFiniteDifferences) {
  Rng rng(1);
  std::vector<Pose> init;
  for (int i = 0; i < 3; ++i)
    init.emplace_back(Eigen::Quaterniond(Eigen::AngleAxisd(0.4 * i + 0.1, Vec3(1, 2, 3).normalized())), Vec3(i, -i, 2.0));
  DepthPoses p = DepthPoses::free(init, {0.0, 1.0, 2.0}, 5.0);
  for (auto& v : p.params().at("q").value) v *= 1.7;  // off the unit sphere
  const std::vector<int> frames = {2, 0};
  Mat<double> a(3, 2), b(4, 2);
  for (Eigen::Index k = 0; k < 6; ++k) a.data()[k] = rng.normal();
  for (Eigen::Index k = 0; k < 8; ++k) b.data()[k] = rng.normal();
  auto loss = [&](const DepthPoses& d) {
    const auto o = d.forward(frames, false);
    return (a.array() * o.x.array()).sum() + (b.array() * o.q.array()).sum();
  };
  const auto batch = p.forward(frames, true);
  p.params().zero_grad();
  p.backward(batch, a, b);
  DepthPoses probe = p;
  const auto fd = diffcore::central_difference(
      [&](const std::vector<double>& v) {
        for (std::size_t k = 0; k < v.size(); ++k) probe.params().flat_value(k) = v[k];
        return loss(probe);
      },
      p.params().flat_values(), 1e-6);
  EXPECT_LT(diffcore::max_relative_error(p.params().flat_grads(), fd), 1e-6);
}

TEST(DepthPoses, NearestRgbPosePrefersTheEarlierFrameOnTies) {
  AsyncDataset ds;
  ds.rgb.resize(2);
  ds.rgb[0].t = 1.0;
  ds.rgb[0].pose = Pose::translation(Vec3(1, 0, 0));
  ds.rgb[1].t = 2.0;
  ds.rgb[1].pose = Pose::translation(Vec3(2, 0, 0));
  EXPECT_EQ(nearest_rgb_pose(ds, 1.5).x().x(), 1.0);
  EXPECT_EQ(nearest_rgb_pose(ds, 1.6).x().x(), 2.0);
  EXPECT_EQ(nearest_rgb_pose(ds, -4.0).x().x(), 1.0);
  EXPECT_THROW(nearest_rgb_pose(AsyncDataset{}, 0.0), ValidationError);
}

TEST(Stages, ZeroDepthWeightIsContinuedBootstrap) {
  const auto& ds = tiny_dataset();
  RunConfig cfg = tiny_config();
  cfg.stages.lambda_depth_max = 0.0;
  const auto stage1 = run_stage1(ds, cfg).model;
  Field base = make_field(ds, cfg);
  bootstrap_train(base, ds, cfg);

  Field a = base, b = base;
  DepthPoses pa = initial_depth_poses(Variant::Full, stage1, ds);
  DepthPoses pb = initial_depth_poses(Variant::NoDepth, stage1, ds);
  joint_optimize(a, pa, ds, cfg, joint_options(Variant::Full));
  joint_optimize(b, pb, ds, cfg, joint_options(Variant::NoDepth));
  EXPECT_EQ(a.params().flat_values(), b.params().flat_values());
  EXPECT_EQ(pa.params().flat_values(), stage1.params().flat_values());
}

TEST(Stages, NoJointKeepsPosesFixedButFitsDepth) {
  const auto& ds = tiny_dataset();
  const RunConfig cfg = tiny_config();
  const auto stage1 = run_stage1(ds, cfg).model;
  Field f = make_field(ds, cfg);
  DepthPoses p = initial_depth_poses(Variant::NoJoint, stage1, ds);
  const auto log = joint_optimize(f, p, ds, cfg, joint_options(Variant::NoJoint));
  EXPECT_EQ(p.params().flat_values(), stage1.params().flat_values());
  ASSERT_FALSE(log.points.empty());
  EXPECT_GT(log.points.back().lambda_depth, 0.0);
}

TEST(Stages, FreeInitializationsStartFromTheirHeuristics) {
  const auto& ds = tiny_dataset();
  const RunConfig cfg = tiny_config();
  const auto stage1 = run_stage1(ds, cfg).model;
  const auto rgb = initial_depth_poses(Variant::RgbInit, stage1, ds).camera_poses();
  for (std::size_t j = 0; j < ds.depth.size(); ++j)
    EXPECT_LT(pose_error(rgb[j], nearest_rgb_pose(ds, ds.depth[j].t)).trans_m, 1e-12);
  const auto lin = initial_depth_poses(Variant::LinearInterpInit, stage1, ds).camera_poses();
  const auto keys = synth::rgb_samples(ds);
  for (std::size_t j = 0; j < ds.depth.size(); ++j)
    EXPECT_LT(pose_error(lin[j], timepose::linear_interp_pose(keys, ds.depth[j].t)).trans_m, 1e-12);
}

TEST(Checkpoints, StagesRoundTripAndRefuseTheWrongStage) {
  const auto& ds = tiny_dataset();
  const RunConfig cfg = tiny_config();
  const auto stage1 = run_stage1(ds, cfg).model;
  const auto p1 = temp_path("asrf_s1.ckpt"), p2 = temp_path("asrf_s2.ckpt"), p3 = temp_path("asrf_s3.ckpt");
  save_stage1(p1, stage1);
  const auto back1 = load_stage1(p1, cfg);
  EXPECT_EQ(back1.params().flat_values(), stage1.params().flat_values());
  EXPECT_LT(pose_error(back1.pose_at(3.3), stage1.pose_at(3.3)).trans_m, 1e-15);

  Field f = make_field(ds, cfg);
  bootstrap_train(f, ds, cfg);
  save_stage2(p2, f);
  EXPECT_EQ(load_stage2(p2, ds, cfg).params().flat_values(), f.params().flat_values());
  EXPECT_THROW(load_stage2(p1, ds, cfg), ValidationError);
  EXPECT_THROW(load_stage1(p2, cfg), ValidationError);
  EXPECT_THROW(load_field_checkpoint(p1, ds, cfg), ValidationError);

  for (Variant v : {Variant::Full, Variant::RgbInit}) {
    DepthPoses poses = initial_depth_poses(v, stage1, ds);
    save_stage3(p3, f, poses, v);
    int stage = 0;
    const auto s = load_field_checkpoint(p3, ds, cfg, &stage);
    EXPECT_EQ(stage, 3);
    EXPECT_EQ(s.variant, v);
    EXPECT_EQ(s.poses.is_model(), poses.is_model());
    EXPECT_EQ(s.field.params().flat_values(), f.params().flat_values());
    const auto a = poses.camera_poses(), b = s.poses.camera_poses();
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_LT(pose_error(a[j], b[j]).trans_m, 1e-12);
  }
  for (const auto& p : {p1, p2, p3}) std::filesystem::remove(p);
}

TEST(Evaluate, ReportsMetricsAndIsDeterministic) {
  const auto& ds = tiny_dataset();
  const RunConfig cfg = tiny_config();
  const auto stage1 = run_stage1(ds, cfg).model;
  Field f = make_field(ds, cfg);
  bootstrap_train(f, ds, cfg);
  const auto [s1, r1] = run_ablation(ds, Variant::Full, cfg, stage1, f, 1);
  const auto [s2, r2] = run_ablation(ds, Variant::Full, cfg, stage1, f, 2);
  EXPECT_EQ(r1.metrics.to_json().dump(), r2.metrics.to_json().dump());  // threads only split evaluation
  EXPECT_GT(r1.metrics.valid_fraction, 0.0);
  ASSERT_TRUE(r1.final_depth_pose.has_value());
  EXPECT_TRUE(std::isfinite(r1.metrics.psnr));
}
