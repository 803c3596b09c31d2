// asrf: data generation, the three training stages, evaluation, rendering and ablations.
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
#include "asrf/pipeline/run.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using namespace asrf;
using namespace asrf::pipeline;

namespace {

struct Options {
  std::string config, dataset, out, ckpt, variant = "full";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
};

struct Resolved {
  RunConfig cfg;
  Json json;
  std::vector<std::string> env;
};

Resolved resolve_config(const Options& o, const std::string& fallback_dir = "") {
  std::string path = o.config;
  if (path.empty() && !fallback_dir.empty() && fs::exists(fs::path(fallback_dir) / "config.json"))
    path = (fs::path(fallback_dir) / "config.json").string();
  Json j = path.empty() ? Json::object() : read_json_file(path);
  Resolved r;
  r.env = apply_env_overrides(j, process_environment());
  if (o.seed_set) apply_override(j, {"stages", "seed"}, std::to_string(o.seed));
  r.cfg = parse_config(j);
  r.json = config_json(r.cfg);
  return r;
}

/// Records what produced the artifacts in `dir`: command line, resolved config and input hashes.
void write_provenance(const std::string& dir, const std::string& command, const std::vector<std::string>& argv,
                      const Resolved& r, const std::vector<std::string>& inputs) {
  Json hashes = Json::object();
  for (const auto& p : inputs)
    if (!p.empty() && fs::is_regular_file(p)) hashes[p] = git_blob_sha1_file(p);
  Json prov{{"command", command},
            {"argv", argv},
            {"config", r.json},
            {"seeds",
             {{"scene", r.cfg.gen.scene.seed},
              {"trajectory", r.cfg.gen.trajectory.seed},
              {"protocol", r.cfg.gen.protocol.seed},
              {"timepose", r.cfg.timepose.seed},
              {"timepose_fit", r.cfg.fit.seed},
              {"field", r.cfg.field.seed},
              {"stages", r.cfg.stages.seed}}},
            {"env_overrides", r.env},
            {"input_sha1", hashes}};
  write_json_file((fs::path(dir) / ("provenance." + command + ".json")).string(), prov);
}

std::string manifest_of(const std::string& dataset) { return (fs::path(dataset) / "manifest.json").string(); }

void require_file(const std::string& path, const std::string& why) {
  if (!fs::is_regular_file(path)) throw ValidationError(why + " (missing " + path + ")");
}

void write_metrics(const std::string& dir, const EvalResult& e) {
  write_json_file((fs::path(dir) / "metrics.json").string(), e.bundle.to_json());
  metrics::write_view_csv((fs::path(dir) / "per_view.csv").string(), e.rows);
}

void write_run_report(const std::string& dir, const RunReport& rep) {
  write_json_file((fs::path(dir) / "report.json").string(), rep.to_json());
  rep.write_curves_csv((fs::path(dir) / "curves.csv").string());
}

int cmd_gen(const Options& o, const std::vector<std::string>& argv) {
  const Resolved r = resolve_config(o);
  const auto ds = synth::generate_dataset(r.cfg.gen, o.threads);
  synth::save_dataset(ds, o.out);
  write_json_file((fs::path(o.out) / "config.json").string(), r.json);
  write_provenance(o.out, "gen", argv, r, {o.config});
  std::cout << "wrote " << ds.rgb.size() << " RGB, " << ds.depth.size() << " depth, " << ds.test.size()
            << " test frames to " << o.out << "\n";
  return 0;
}

int cmd_fit(const Options& o, const std::vector<std::string>& argv) {
  const Resolved r = resolve_config(o, o.dataset);
  const auto ds = synth::load_dataset(o.dataset, false);
  fs::create_directories(o.out);
  const auto res = run_stage1(ds, r.cfg);
  save_stage1((fs::path(o.out) / "stage1.ckpt").string(), res.model);
  write_json_file((fs::path(o.out) / "config.json").string(), r.json);
  RunReport rep;
  rep.variant = "stage1";
  rep.stages.push_back(stage1_log(res.report));
  rep.final_depth_pose = depth_pose_errors(DepthPoses::from_model(res.model, depth_times(ds)).sensor_poses(ds.extrinsic), ds);
  Json j = rep.to_json();
  j.erase("metrics");
  write_json_file((fs::path(o.out) / "stage1_report.json").string(), j);
  write_provenance(o.out, "fit-timepose", argv, r, {o.config, manifest_of(o.dataset)});
  std::cout << "stage 1: train " << res.report.train.mean_trans_m << " m / " << res.report.train.mean_rot_deg << " deg";
  if (rep.final_depth_pose)
    std::cout << ", depth frames " << rep.final_depth_pose->mean_trans_m << " m / " << rep.final_depth_pose->mean_rot_deg << " deg";
  std::cout << "\n";
  return 0;
}

int cmd_bootstrap(const Options& o, const std::vector<std::string>& argv) {
  const Resolved r = resolve_config(o, o.dataset);
  const auto ds = synth::load_dataset(o.dataset);
  fs::create_directories(o.out);
  Field f = make_field(ds, r.cfg);
  RunReport rep;
  rep.variant = "stage2";
  rep.stages.push_back(bootstrap_train(f, ds, r.cfg));
  save_stage2((fs::path(o.out) / "stage2.ckpt").string(), f);
  write_json_file((fs::path(o.out) / "config.json").string(), r.json);
  rep.write_curves_csv((fs::path(o.out) / "stage2_curves.csv").string());
  write_provenance(o.out, "bootstrap", argv, r, {o.config, manifest_of(o.dataset)});
  std::cout << "stage 2: final photometric MSE " << rep.stages[0].points.back().color << "\n";
  return 0;
}

/// Stage 3 for one variant into `dir`, from the stage-1/2 checkpoints in `run`.
RunReport stage3_into(const Resolved& r, const synth::AsyncDataset& ds, const std::string& run, const std::string& dir,
                      Variant v, int threads) {
  const std::string c1 = (fs::path(run) / "stage1.ckpt").string(), c2 = (fs::path(run) / "stage2.ckpt").string();
  require_file(c1, "stage 3 needs a stage-1 time-pose model; run fit-timepose first");
  require_file(c2, "stage 3 needs a stage-2 checkpoint; run bootstrap first");
  const TimePoseModel m = load_stage1(c1, r.cfg);
  const Field f = load_stage2(c2, ds, r.cfg);
  fs::create_directories(dir);
  auto [state, rep] = run_ablation(ds, v, r.cfg, m, f, threads);
  save_stage3((fs::path(dir) / "stage3.ckpt").string(), state.field, state.poses, v);
  write_json_file((fs::path(dir) / "metrics.json").string(), rep.metrics.to_json());
  write_run_report(dir, rep);
  return rep;
}

int cmd_joint(const Options& o, const std::vector<std::string>& argv) {
  const Resolved r = resolve_config(o, o.dataset);
  const auto ds = synth::load_dataset(o.dataset);
  const RunReport rep = stage3_into(r, ds, o.out, o.out, parse_variant(o.variant), o.threads);
  write_json_file((fs::path(o.out) / "config.json").string(), r.json);
  write_provenance(o.out, "joint", argv, r,
                   {o.config, manifest_of(o.dataset), (fs::path(o.out) / "stage1.ckpt").string(),
                    (fs::path(o.out) / "stage2.ckpt").string()});
  std::cout << "stage 3 (" << o.variant << "): " << rep.metrics.to_json().dump() << "\n";
  return 0;
}

int cmd_ablate(const Options& o, const std::vector<std::string>& argv) {
  const Resolved r = resolve_config(o, o.dataset);
  const auto ds = synth::load_dataset(o.dataset);
  std::vector<Variant> variants;
  std::stringstream ss(o.variant);
  for (std::string v; std::getline(ss, v, ',');) variants.push_back(parse_variant(v));
  require(!variants.empty(), "ablate: no variant given");
  Json summary = Json::object();
  for (Variant v : variants) {
    const std::string dir = (fs::path(o.out) / ("ablate_" + to_string(v))).string();
    const RunReport rep = stage3_into(r, ds, o.out, dir, v, o.threads);
    summary[to_string(v)] = rep.metrics.to_json();
    std::cout << to_string(v) << ": " << rep.metrics.to_json().dump() << "\n";
  }
  const std::string sp = (fs::path(o.out) / "ablation.json").string();
  Json all = fs::exists(sp) ? read_json_file(sp) : Json::object();
  for (auto it = summary.begin(); it != summary.end(); ++it) all[it.key()] = it.value();
  write_json_file(sp, all);
  write_provenance(o.out, "ablate", argv, r, {o.config, manifest_of(o.dataset)});
  return 0;
}

/// Field plus depth poses from a stage-2 or stage-3 checkpoint (stage 2 has no depth poses).
Stage3State load_for_eval(const Options& o, const Resolved& r, const synth::AsyncDataset& ds) {
  require_file(o.ckpt, "eval needs a checkpoint");
  return load_field_checkpoint(o.ckpt, ds, r.cfg);
}

int cmd_eval(const Options& o, const std::vector<std::string>& argv) {
  const std::string ckdir = fs::path(o.ckpt).parent_path().string();
  const Resolved r = resolve_config(o, ckdir);
  const auto ds = synth::load_dataset(o.dataset);
  const Stage3State s = load_for_eval(o, r, ds);
  const std::vector<Pose> poses = s.poses.size() ? s.poses.sensor_poses(ds.extrinsic) : std::vector<Pose>{};
  const EvalResult e = evaluate(s.field, ds, r.cfg, poses, o.threads);
  const std::string out = o.out.empty() ? (ckdir.empty() ? "." : ckdir) : o.out;
  fs::create_directories(out);
  write_metrics(out, e);
  write_provenance(out, "eval", argv, r, {o.config, manifest_of(o.dataset), o.ckpt});
  std::cout << e.bundle.to_json().dump() << "\n";
  return 0;
}

int cmd_render(const Options& o, const std::vector<std::string>& argv) {
  const std::string ckdir = fs::path(o.ckpt).parent_path().string();
  const Resolved r = resolve_config(o, ckdir);
  const auto ds = synth::load_dataset(o.dataset);
  const Stage3State s = load_for_eval(o, r, ds);
  const EvalResult e = evaluate(s.field, ds, r.cfg, {}, o.threads, true);
  fs::create_directories(o.out);
  for (std::size_t i = 0; i < e.renders.size(); ++i) {
    const auto& gt = ds.test[i].depth;
    float lo = std::numeric_limits<float>::max(), hi = 0.f;
    for (float z : gt.data)
      if (z > 0.f) {
        lo = std::min(lo, z);
        hi = std::max(hi, z);
      }
    if (!(hi > 0.f)) lo = 0.f, hi = 1.f;
    char name[64];
    std::snprintf(name, sizeof name, "view_%03zu", i);
    synth::write_png((fs::path(o.out) / (std::string(name) + "_rgb.png")).string(), e.renders[i].rgb);
    synth::write_png((fs::path(o.out) / (std::string(name) + "_depth.png")).string(),
                     synth::colorize_depth(e.renders[i].depth, lo, hi));
  }
  write_provenance(o.out, "render", argv, r, {o.config, manifest_of(o.dataset), o.ckpt});
  std::cout << "rendered " << e.renders.size() << " views to " << o.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees many large temporaries; keep them off mmap and untrimmed.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Depth-regularized radiance fields from asynchronous RGB-D sequences"};
  app.require_subcommand(1);
  app.fallthrough();  // --threads may follow the subcommand
  Options o;
  app.add_option("--threads", o.threads, "worker threads for generation and evaluation (1 = bit-reproducible)")
      ->check(CLI::PositiveNumber);

  auto with_config = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--config", o.config, "run configuration (JSON)");
    if (required) opt->required();
    c->add_option("--seed", o.seed, "override stages.seed")->each([&](const std::string&) { o.seed_set = true; });
  };
  auto* gen = app.add_subcommand("gen", "render a synthetic asynchronous RGB-D dataset");
  with_config(gen, true);
  gen->add_option("--out", o.out, "dataset directory")->required();

  auto* fit = app.add_subcommand("fit-timepose", "stage 1: fit the time-pose function to the RGB poses");
  auto* boot = app.add_subcommand("bootstrap", "stage 2: photometric-only training of the field");
  auto* joint = app.add_subcommand("joint", "stage 3: joint refinement with ramped depth supervision");
  auto* ablate = app.add_subcommand("ablate", "stage 3 variants from shared stage-1/2 checkpoints");
  for (auto* c : {fit, boot, joint, ablate}) {
    with_config(c, false);  // default: the config.json that gen wrote next to the dataset
    c->add_option("--dataset", o.dataset, "dataset directory")->required();
    c->add_option("--out", o.out, "run directory (holds the stage checkpoints)")->required();
  }
  joint->add_option("--variant", o.variant, "full | no_depth | no_joint | rgb_init | linear_interp_init");
  ablate->add_option("--variant", o.variant, "comma-separated variants")->required();

  auto* eval = app.add_subcommand("eval", "metrics on the held-out views");
  auto* render = app.add_subcommand("render", "write color and colorized depth PNGs per test view");
  for (auto* c : {eval, render}) {
    with_config(c, false);
    c->add_option("--dataset", o.dataset, "dataset directory")->required();
    c->add_option("--ckpt", o.ckpt, "stage-2 or stage-3 checkpoint")->required();
  }
  eval->add_option("--out", o.out, "output directory (default: the checkpoint's directory)");
  render->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(o, args);
    if (fit->parsed()) return cmd_fit(o, args);
    if (boot->parsed()) return cmd_bootstrap(o, args);
    if (joint->parsed()) return cmd_joint(o, args);
    if (ablate->parsed()) return cmd_ablate(o, args);
    if (eval->parsed()) return cmd_eval(o, args);
    if (render->parsed()) return cmd_render(o, args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
