#pragma once

#include "asrf/diffcore/adam.hpp"
#include "asrf/timepose/losses.hpp"

#include <vector>

namespace asrf::timepose {

struct FitConfig {
  int iters = 3000;
  double lr = 5e-3;
  double lr_final_ratio = 0.05;  // exponential decay to lr * ratio at the last step
  double lr_uncertainty = 2e-2;
  double lambda_speed = 0.01;
  int batch_size = 0;  // 0 = full batch
  int log_every = 100;
  std::uint64_t seed = 7;
  // Early steps fit sign-continuous quaternion labels without prediction alignment, so the rotation
  // head does not settle on opposite hemispheres for different stretches of a long turn.
  int continuous_warmup = 300;
};

struct ErrorSummary {
  double mean_rot_deg = 0.0;
  double mean_trans_m = 0.0;
  double max_rot_deg = 0.0;
  double max_trans_m = 0.0;
  std::size_t count = 0;
};

inline ErrorSummary summarize(const std::vector<PoseError>& errs) {
  ErrorSummary s;
  s.count = errs.size();
  if (errs.empty()) return s;
  for (const auto& e : errs) {
    s.mean_rot_deg += e.rot_deg;
    s.mean_trans_m += e.trans_m;
    s.max_rot_deg = std::max(s.max_rot_deg, e.rot_deg);
    s.max_trans_m = std::max(s.max_trans_m, e.trans_m);
  }
  s.mean_rot_deg /= static_cast<double>(errs.size());
  s.mean_trans_m /= static_cast<double>(errs.size());
  return s;
}

inline ErrorSummary evaluate_poses(const TimePoseModel& model, const std::vector<TimedPoseSample>& samples) {
  if (samples.empty()) return {};
  const auto pred = model.forward(timestamps(samples));
  std::vector<PoseError> errs;
  for (std::size_t i = 0; i < samples.size(); ++i)
    errs.push_back(pose_error(pred.pose(static_cast<Eigen::Index>(i)), samples[i].pose));
  return summarize(errs);
}

struct LossPoint {
  int step = 0;
  double total = 0.0, trans = 0.0, rot = 0.0, speed = 0.0;
};

struct FitReport {
  std::vector<LossPoint> curve;
  ErrorSummary train;
  ErrorSummary heldout;
};

struct FitResult {
  TimePoseModel model;
  FitReport report;
};

/// Time span and translation normalization covering the samples.
inline TimePoseNormalization normalization_for(const std::vector<TimedPoseSample>& samples) {
  TimePoseNormalization n;
  n.t_min = samples.front().t;
  n.t_max = samples.back().t;
  Vec3 lo = samples.front().pose.x(), hi = lo;
  for (const auto& s : samples) {
    lo = lo.cwiseMin(s.pose.x());
    hi = hi.cwiseMax(s.pose.x());
  }
  n.center = 0.5 * (lo + hi);
  n.scale = std::max(0.5 * (hi - lo).maxCoeff(), 1.0);
  return n;
}

inline void validate_samples(const std::vector<TimedPoseSample>& samples) {
  require(samples.size() >= 3, "fit_timepose: need at least 3 samples");
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw ValidationError("fit_timepose: timestamps must be strictly increasing (sample " + std::to_string(i) + ")");
    }
  }
}

/// One optimizer step of L_sigma + lambda_speed * L_speed on `batch`. Returns the loss terms.
inline LossPoint timepose_step(TimePoseModel& model, const std::vector<TimedPoseSample>& batch, double lambda_speed,
                               const std::vector<double>* label_signs = nullptr) {
  TimePoseCache cache;
  const bool speed = lambda_speed > 0.0;
  const auto pred = model.forward(timestamps(batch), speed, &cache);
  Mat<double> gx, gq, gv;
  double gst = 0, gsr = 0;
  const auto terms = pose_loss_terms(pred, batch, model.s_trans(), model.s_rot(), &gx, &gq, &gst, &gsr, label_signs);
  LossPoint lp;
  lp.trans = terms.trans;
  lp.rot = terms.rot;
  lp.total = terms.total;
  if (speed) {
    lp.speed = speed_loss_terms(pred, batch, &gv);
    gv *= lambda_speed;
    lp.total += lambda_speed * lp.speed;
  }
  model.backward(cache, gx, gq, speed ? &gv : nullptr);
  model.uncertainty().at("s_trans").grad[0] += gst;
  model.uncertainty().at("s_rot").grad[0] += gsr;
  return lp;
}

inline FitResult fit_timepose(std::vector<TimedPoseSample> samples, const TimePoseConfig& model_cfg,
                              const FitConfig& cfg, const std::vector<TimedPoseSample>& heldout = {}) {
  validate_samples(samples);
  require(cfg.iters >= 0, "fit_timepose: negative iteration count");
  if (cfg.lambda_speed > 0.0 && !samples.front().v) attach_velocities(samples);

  FitResult res{TimePoseModel(model_cfg, normalization_for(samples)), {}};
  TimePoseModel& model = res.model;
  diffcore::AdamState net_opt(model.params(), cfg.lr);
  diffcore::AdamState s_opt(model.uncertainty(), cfg.lr_uncertainty);
  Rng rng(cfg.seed);
  const double decay = cfg.iters > 1 ? std::pow(cfg.lr_final_ratio, 1.0 / (cfg.iters - 1)) : 1.0;

  const std::vector<double> signs = continuous_signs(samples);
  std::vector<TimedPoseSample> batch;
  std::vector<double> batch_signs;
  for (int it = 0; it < cfg.iters; ++it) {
    const std::vector<TimedPoseSample>* b = &samples;
    const std::vector<double>* bs = &signs;
    if (cfg.batch_size > 0 && static_cast<std::size_t>(cfg.batch_size) < samples.size()) {
      batch.clear();
      batch_signs.clear();
      for (int k = 0; k < cfg.batch_size; ++k) {
        const std::size_t j = rng.below(samples.size());
        batch.push_back(samples[j]);
        batch_signs.push_back(signs[j]);
      }
      b = &batch;
      bs = &batch_signs;
    }
    LossPoint lp = timepose_step(model, *b, cfg.lambda_speed, it < cfg.continuous_warmup ? bs : nullptr);
    net_opt.lr = cfg.lr * std::pow(decay, it);
    diffcore::adam_step(model.params(), net_opt);
    diffcore::adam_step(model.uncertainty(), s_opt);
    if (cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.iters)) {
      lp.step = it;
      res.report.curve.push_back(lp);
    }
  }
  res.report.train = evaluate_poses(model, samples);
  res.report.heldout = evaluate_poses(model, heldout);
  return res;
}

}  // namespace asrf::timepose
