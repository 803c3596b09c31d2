// Pose regression with learned homoscedastic weights, plus linear-speed supervision.
#pragma once

#include "asrf/timepose/model.hpp"

#include <optional>
#include <vector>

namespace asrf::timepose {

struct TimedPoseSample {
  double t = 0.0;
  Pose pose;
  std::optional<Vec3> v;  // ground-truth linear velocity, m/s
};

/// Velocity labels by central differences over neighbors; one-sided at the ends.
inline void attach_velocities(std::vector<TimedPoseSample>& s) {
  require(s.size() >= 2, "attach_velocities: need at least two samples");
  const std::size_t n = s.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == n ? n - 1 : i + 1;
    s[i].v = (s[b].pose.x() - s[a].pose.x()) / (s[b].t - s[a].t);
  }
}

/// Per-sample signs (+1/-1) that make the label quaternions continuous in time.
inline std::vector<double> continuous_signs(const std::vector<TimedPoseSample>& s) {
  std::vector<double> sign(s.size(), 1.0);
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double d = s[i - 1].pose.q().coeffs().dot(s[i].pose.q().coeffs());
    sign[i] = d < 0.0 ? -sign[i - 1] : sign[i - 1];
  }
  return sign;
}

struct PoseLossTerms {
  double total = 0.0;
  double trans = 0.0;  // mean squared translation residual (m^2)
  double rot = 0.0;    // mean squared quaternion residual, sign-aligned
};

/// Loss value and gradients w.r.t. predictions. Gradient matrices are filled when non-null.
inline PoseLossTerms pose_loss_terms(const TimePoseOutput& pred, const std::vector<TimedPoseSample>& batch,
                                     double s_trans, double s_rot, Mat<double>* g_x, Mat<double>* g_q,
                                     double* g_s_trans, double* g_s_rot,
                                     const std::vector<double>* label_signs = nullptr) {
  // With label_signs, labels keep the given signs instead of being aligned to the prediction.
  require(!batch.empty(), "pose_loss: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  require(pred.x.cols() == n && pred.q.cols() == n, "pose_loss: prediction count mismatch");
  if (g_x) *g_x = Mat<double>::Zero(3, n);
  if (g_q) *g_q = Mat<double>::Zero(4, n);
  PoseLossTerms out;
  const double et = std::exp(-s_trans), er = std::exp(-s_rot);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& gt = batch[static_cast<std::size_t>(i)].pose;
    const Vec3 dx = pred.x.col(i) - gt.x();
    Eigen::Vector4d q(gt.q().w(), gt.q().x(), gt.q().y(), gt.q().z());
    const Eigen::Vector4d qh = pred.q.col(i);
    if (label_signs) {
      q *= (*label_signs)[static_cast<std::size_t>(i)];
    } else if (q.dot(qh) < 0.0) {
      q = -q;  // aligning q with q^ is equivalent to flipping q^
    }
    const Eigen::Vector4d dq = qh - q;
    out.trans += dx.squaredNorm();
    out.rot += dq.squaredNorm();
    if (g_x) g_x->col(i) = (2.0 * et / static_cast<double>(n)) * dx;
    if (g_q) g_q->col(i) = (2.0 * er / static_cast<double>(n)) * dq;
  }
  out.trans /= static_cast<double>(n);
  out.rot /= static_cast<double>(n);
  out.total = out.trans * et + s_trans + out.rot * er + s_rot;
  if (g_s_trans) *g_s_trans = 1.0 - out.trans * et;
  if (g_s_rot) *g_s_rot = 1.0 - out.rot * er;
  return out;
}

/// Mean over the batch of ||v - v^||^2 (components summed).
inline double speed_loss_terms(const TimePoseOutput& pred, const std::vector<TimedPoseSample>& batch,
                               Mat<double>* g_v) {
  require(!batch.empty(), "speed_loss: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  require(pred.v.cols() == n, "speed_loss: prediction has no velocities");
  if (g_v) *g_v = Mat<double>::Zero(3, n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& v = batch[static_cast<std::size_t>(i)].v;
    if (!v) throw ValidationError("speed_loss: sample " + std::to_string(i) + " has no velocity label");
    const Vec3 r = pred.v.col(i) - *v;
    loss += r.squaredNorm();
    if (g_v) g_v->col(i) = (2.0 / static_cast<double>(n)) * r;
  }
  return loss / static_cast<double>(n);
}

inline std::vector<double> timestamps(const std::vector<TimedPoseSample>& batch) {
  std::vector<double> t;
  t.reserve(batch.size());
  for (const auto& s : batch) t.push_back(s.t);
  return t;
}

/// Uncertainty-balanced pose loss; accumulates gradients into the model's stores.
inline PoseLossTerms pose_loss(TimePoseModel& model, const std::vector<TimedPoseSample>& batch) {
  require(!batch.empty(), "pose_loss: empty batch");
  TimePoseCache cache;
  const auto pred = model.forward(timestamps(batch), false, &cache);
  Mat<double> gx, gq;
  double gst = 0, gsr = 0;
  const auto terms = pose_loss_terms(pred, batch, model.s_trans(), model.s_rot(), &gx, &gq, &gst, &gsr);
  model.backward(cache, gx, gq);
  model.uncertainty().at("s_trans").grad[0] += gst;
  model.uncertainty().at("s_rot").grad[0] += gsr;
  return terms;
}

/// Speed loss; accumulates gradients into the model.
inline double speed_loss(TimePoseModel& model, const std::vector<TimedPoseSample>& batch) {
  require(!batch.empty(), "speed_loss: empty batch");
  for (const auto& s : batch)
    if (!s.v) throw ValidationError("speed_loss: batch is missing velocity labels");
  TimePoseCache cache;
  const auto pred = model.forward(timestamps(batch), true, &cache);
  Mat<double> gv;
  const double l = speed_loss_terms(pred, batch, &gv);
  const auto n = static_cast<Eigen::Index>(batch.size());
  model.backward(cache, Mat<double>::Zero(3, n), Mat<double>::Zero(4, n), &gv);
  return l;
}

}  // namespace asrf::timepose
