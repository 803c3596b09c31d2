// The time-pose network: timestamp -> (translation, unit quaternion).
//
// Per-level grid features are concatenated and decoded by a ReLU trunk that also receives the
// normalized timestamp at its skip layer; two linear heads produce translation and a raw
// quaternion that is normalized on output.
#pragma once

#include "asrf/common.hpp"
#include "asrf/diffcore/mlp.hpp"
#include "asrf/diffcore/param_store.hpp"
#include "asrf/geom.hpp"
#include "asrf/timepose/hash_grid.hpp"

#include <string>
#include <vector>

namespace asrf::timepose {

using diffcore::Mlp;
using diffcore::MlpCache;
using diffcore::MlpSpec;
using diffcore::ParamStore;

struct TimePoseConfig {
  int levels = 8;
  int base_resolution = 16;
  double growth = 2.0;
  int features = 2;
  std::size_t max_dense_nodes = 65536;
  std::size_t hash_table_size = 4096;
  bool force_hash = false;
  int hidden_width = 128;
  int hidden_layers = 4;
  int skip_layer = 2;  // 0 disables the timestamp skip
  double feature_init = 1e-4;
  // Only the coarsest `active_levels` levels feed the decoder (0 = all); finer ones read as zero.
  // Sparse pose samples cannot constrain cells finer than their spacing, so fitting starts coarse.
  int active_levels = 0;
  std::uint64_t seed = 1;

  void validate() const {
    require(levels >= 1, "timepose: need at least one level");
    require(base_resolution >= 2 && growth >= 1.0, "timepose: bad grid resolutions");
    require(hidden_layers >= 2 && hidden_width >= 1, "timepose: decoder needs >= 2 layers");
    require(skip_layer >= 0 && skip_layer < hidden_layers, "timepose: skip layer out of range");
    require(active_levels >= 0 && active_levels <= levels, "timepose: active_levels out of range");
  }
};

/// Affine maps between seconds/meters and the network's normalized ranges.
struct TimePoseNormalization {
  double t_min = 0.0, t_max = 1.0;
  Vec3 center = Vec3::Zero();
  double scale = 1.0;
};

struct TimePoseOutput {
  Mat<double> x;      // 3 x N, meters
  Mat<double> q;      // 4 x N (w, x, y, z), unit norm
  Mat<double> v;      // 3 x N, m/s; empty unless requested
  std::vector<bool> flagged;  // clamped timestamp or degenerate quaternion
  Pose pose(Eigen::Index i) const {
    return Pose::from_wxyz(q(0, i), q(1, i), q(2, i), q(3, i), x.col(i));
  }
};

struct TimePoseCache {
  std::vector<InterpPoint> points;  // levels x N, level-major
  Mat<double> feats, dfeats;
  MlpCache<double> trunk;
  Mat<double> h, dh;
  Mat<double> q_raw;
  Vec<double> q_norm;
  bool with_velocity = false;
  bool valid = false;
};

class TimePoseModel {
 public:
  TimePoseModel() = default;

  TimePoseModel(const TimePoseConfig& cfg, const TimePoseNormalization& norm) : cfg_(cfg), norm_(norm) {
    cfg_.validate();
    require(norm_.t_min < norm_.t_max, "timepose: need t_min < t_max");
    require(norm_.scale > 0, "timepose: translation scale must be positive");
    Rng rng(cfg_.seed);
    static constexpr std::uint64_t kPrimes[] = {2654435761ULL, 805459861ULL, 3674653429ULL, 2097192037ULL,
                                                1434869437ULL, 2165219737ULL, 1000000007ULL, 998244353ULL};
    double res = cfg_.base_resolution;
    for (int l = 0; l < cfg_.levels; ++l) {
      const int r = static_cast<int>(std::floor(res + 1e-9));
      levels_.push_back(HashLevel::make(r, cfg_.features, cfg_.max_dense_nodes, cfg_.hash_table_size,
                                        kPrimes[l % 8], cfg_.force_hash));
      const std::size_t b = params_.add("grid.l" + std::to_string(l),
                                        {static_cast<std::size_t>(cfg_.features), levels_.back().table_size});
      for (auto& v : params_[b].value) v = rng.uniform(-cfg_.feature_init, cfg_.feature_init);
      grid_blocks_.push_back(b);
      res *= cfg_.growth;
    }
    MlpSpec spec;
    spec.widths.push_back(cfg_.levels * cfg_.features);
    for (int i = 0; i < cfg_.hidden_layers; ++i) spec.widths.push_back(cfg_.hidden_width);
    if (cfg_.skip_layer > 0) {
      spec.skip_layers = {cfg_.skip_layer};
      spec.skip_width = 1;
    }
    spec.output = diffcore::Activation::ReLU;
    trunk_ = Mlp<double>(spec, params_, "trunk", rng);

    const auto h = static_cast<std::size_t>(cfg_.hidden_width);
    trans_w_ = params_.add("head_trans.w", {3, h});
    trans_b_ = params_.add("head_trans.b", {3});
    rot_w_ = params_.add("head_rot.w", {4, h});
    rot_b_ = params_.add("head_rot.b", {4});
    diffcore::glorot_uniform<double>(params_[trans_w_], h, 3, rng, 0.1);
    diffcore::glorot_uniform<double>(params_[rot_w_], h, 4, rng, 0.01);
    params_[rot_b_].value = {1.0, 0.0, 0.0, 0.0};

    s_trans_ = uncertainty_.add("s_trans", {1});
    s_rot_ = uncertainty_.add("s_rot", {1});
  }

  const TimePoseConfig& config() const { return cfg_; }
  const TimePoseNormalization& normalization() const { return norm_; }
  const std::vector<HashLevel>& levels() const { return levels_; }
  ParamStore<double>& params() { return params_; }
  const ParamStore<double>& params() const { return params_; }
  ParamStore<double>& uncertainty() { return uncertainty_; }
  const ParamStore<double>& uncertainty() const { return uncertainty_; }
  double s_trans() const { return uncertainty_[s_trans_].value[0]; }
  double s_rot() const { return uncertainty_[s_rot_].value[0]; }
  std::size_t grid_block(int level) const { return grid_blocks_.at(level); }
  std::size_t trans_bias_block() const { return trans_b_; }
  std::size_t rot_bias_block() const { return rot_b_; }

  int active_levels() const { return cfg_.active_levels == 0 ? cfg_.levels : cfg_.active_levels; }
  void set_active_levels(int k) {
    require(k >= 0 && k <= cfg_.levels, "timepose: active_levels out of range");
    cfg_.active_levels = k;
  }

  double normalize_time(double t) const { return (t - norm_.t_min) / (norm_.t_max - norm_.t_min); }

  TimePoseOutput forward(const std::vector<double>& ts, bool with_velocity = false,
                         TimePoseCache* cache = nullptr) const {
    const auto n = static_cast<Eigen::Index>(ts.size());
    const int lf = cfg_.levels * cfg_.features;
    TimePoseOutput out;
    out.flagged.assign(ts.size(), false);

    Mat<double> feats = Mat<double>::Zero(lf, n);
    Mat<double> dfeats;
    if (with_velocity) dfeats = Mat<double>::Zero(lf, n);
    Mat<double> tn(1, n), dtn = Mat<double>::Ones(1, n);
    std::vector<InterpPoint> points;
    points.reserve(levels_.size() * ts.size());
    for (Eigen::Index i = 0; i < n; ++i) tn(0, i) = normalize_time(ts[i]);

    const auto active = static_cast<std::size_t>(active_levels());
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const HashLevel& lev = levels_[l];
      if (l >= active) {
        for (Eigen::Index i = 0; i < n; ++i) points.push_back(locate(lev, tn(0, i)));
        continue;
      }
      const double* table = params_[grid_blocks_[l]].value.data();
      for (Eigen::Index i = 0; i < n; ++i) {
        const InterpPoint p = locate(lev, tn(0, i));
        if (p.clamped) out.flagged[i] = true;
        for (int k = 0; k < 3; ++k) {
          const double* node = table + lev.slot(p.n - 1 + k) * lev.features;
          for (int f = 0; f < lev.features; ++f) {
            feats(l * lev.features + f, i) += p.q.w[k] * node[f];
            if (with_velocity) dfeats(l * lev.features + f, i) += p.q.dw[k] * lev.resolution * node[f];
          }
        }
        points.push_back(p);
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (tn(0, i) >= 0.0 && tn(0, i) <= 1.0) continue;
      // clamped queries are constant in t
      tn(0, i) = std::isnan(tn(0, i)) ? 0.0 : std::clamp(tn(0, i), 0.0, 1.0);
      dtn(0, i) = 0.0;
      if (with_velocity) dfeats.col(i).setZero();
    }

    MlpCache<double> trunk_cache;
    Mat<double> dh;
    const Mat<double>* skip = cfg_.skip_layer > 0 ? &tn : nullptr;
    const Mat<double>* dskip = cfg_.skip_layer > 0 ? &dtn : nullptr;
    Mat<double> h = with_velocity
                        ? trunk_.forward_tangent(params_, feats, dfeats, skip, dskip, &dh, cache ? &trunk_cache : nullptr)
                        : trunk_.forward(params_, feats, skip, cache ? &trunk_cache : nullptr);

    const auto wt = params_[trans_w_].mat();
    const auto bt = params_[trans_b_].vec();
    Mat<double> xo = wt * h;
    xo.colwise() += bt;
    out.x = (xo * norm_.scale).colwise() + norm_.center;
    if (with_velocity) out.v = (wt * dh) * (norm_.scale / (norm_.t_max - norm_.t_min));

    const auto wr = params_[rot_w_].mat();
    const auto br = params_[rot_b_].vec();
    Mat<double> qr = wr * h;
    qr.colwise() += br;
    Vec<double> qn(n);
    out.q.resize(4, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      qn[i] = qr.col(i).norm();
      if (qn[i] < 1e-8 || !std::isfinite(qn[i])) {
        out.q.col(i) << 1.0, 0.0, 0.0, 0.0;
        out.flagged[i] = true;
        qn[i] = 0.0;
      } else {
        out.q.col(i) = qr.col(i) / qn[i];
      }
    }

    if (cache) {
      cache->points = std::move(points);
      cache->feats = std::move(feats);
      cache->dfeats = std::move(dfeats);
      cache->trunk = std::move(trunk_cache);
      cache->h = std::move(h);
      cache->dh = std::move(dh);
      cache->q_raw = std::move(qr);
      cache->q_norm = std::move(qn);
      cache->with_velocity = with_velocity;
      cache->valid = true;
    }
    return out;
  }

  Pose pose_at(double t) const { return forward({t}).pose(0); }
  Vec3 velocity_at(double t) const { return forward({t}, true).v.col(0); }

  /// Accumulates parameter gradients given d loss / d outputs. g_q is w.r.t. the unit quaternion.
  void backward(const TimePoseCache& cache, const Mat<double>& g_x, const Mat<double>& g_q,
                const Mat<double>* g_v = nullptr) {
    if (!cache.valid) throw ValidationError("TimePoseModel::backward without a recorded forward pass");
    if (g_v && !cache.with_velocity) throw ValidationError("TimePoseModel::backward: velocity gradient needs a velocity pass");
    const Eigen::Index n = cache.h.cols();
    require(g_x.cols() == n && g_q.cols() == n && g_x.rows() == 3 && g_q.rows() == 4, "TimePoseModel::backward: shape");

    const Mat<double> g_xo = g_x * norm_.scale;
    params_[trans_w_].grad_mat().noalias() += g_xo * cache.h.transpose();
    params_[trans_b_].grad_vec() += g_xo.rowwise().sum();
    Mat<double> g_h = params_[trans_w_].mat().transpose() * g_xo;

    Mat<double> g_qr = Mat<double>::Zero(4, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (cache.q_norm[i] == 0.0) continue;
      const Eigen::Vector4d qhat = cache.q_raw.col(i) / cache.q_norm[i];
      const Eigen::Vector4d g = g_q.col(i);
      g_qr.col(i) = (g - qhat * qhat.dot(g)) / cache.q_norm[i];
    }
    params_[rot_w_].grad_mat().noalias() += g_qr * cache.h.transpose();
    params_[rot_b_].grad_vec() += g_qr.rowwise().sum();
    g_h.noalias() += params_[rot_w_].mat().transpose() * g_qr;

    Mat<double> g_dh;
    if (g_v) {
      const Mat<double> g_dxo = *g_v * (norm_.scale / (norm_.t_max - norm_.t_min));
      params_[trans_w_].grad_mat().noalias() += g_dxo * cache.dh.transpose();
      g_dh = params_[trans_w_].mat().transpose() * g_dxo;
    }

    Mat<double> g_feats, g_dfeats;
    trunk_.backward(params_, cache.trunk, g_h, g_v ? &g_dh : nullptr, &g_feats, nullptr, g_v ? &g_dfeats : nullptr);

    const auto nl = static_cast<std::size_t>(active_levels());
    for (std::size_t l = 0; l < nl; ++l) {
      const HashLevel& lev = levels_[l];
      double* grad = params_[grid_blocks_[l]].grad.data();
      for (Eigen::Index i = 0; i < n; ++i) {
        const InterpPoint& p = cache.points[l * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)];
        for (int k = 0; k < 3; ++k) {
          double* node = grad + lev.slot(p.n - 1 + k) * lev.features;
          for (int f = 0; f < lev.features; ++f) {
            double g = p.q.w[k] * g_feats(l * lev.features + f, i);
            if (g_v && !p.clamped) g += p.q.dw[k] * lev.resolution * g_dfeats(l * lev.features + f, i);
            node[f] += g;
          }
        }
      }
    }
  }

 private:
  TimePoseConfig cfg_;
  TimePoseNormalization norm_;
  std::vector<HashLevel> levels_;
  ParamStore<double> params_;
  ParamStore<double> uncertainty_;
  std::vector<std::size_t> grid_blocks_;
  Mlp<double> trunk_;
  std::size_t trans_w_ = 0, trans_b_ = 0, rot_w_ = 0, rot_b_ = 0;
  std::size_t s_trans_ = 0, s_rot_ = 0;
};

}  // namespace asrf::timepose
