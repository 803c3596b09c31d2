// Partitioned radiance field: the ground plan is split into Nx x Ny equal blocks, each owning an
// MLP. Every sample point goes to the block whose centroid is nearest in xy.
//
// Sub-field: gamma(p) -> ReLU trunk -> [raw density | feature]; color head takes
// [feature | gamma(d) | appearance] -> ReLU -> 3 logits. Density is softplus, color is sigmoid.
#pragma once

#include "asrf/diffcore/encoding.hpp"
#include "asrf/diffcore/mlp.hpp"
#include "asrf/synth/scene.hpp"

#include <string>
#include <vector>

namespace asrf::field {

using diffcore::Mlp;
using diffcore::MlpCache;
using diffcore::MlpSpec;
using diffcore::ParamStore;
using diffcore::PositionalEncoding;
using synth::Aabb;

struct FieldConfig {
  int tiles_x = 2, tiles_y = 2;
  int pos_freq = 10, dir_freq = 4;
  int density_width = 64, density_layers = 4;
  int feature_width = 64;
  int color_width = 32, color_layers = 2;
  bool appearance = true;
  int appearance_dim = 8;
  double density_bias = 0.0;  // initial raw density offset
  std::uint64_t seed = 5;

  void validate() const {
    require(tiles_x >= 1 && tiles_y >= 1, "field: need at least one tile");
    require(pos_freq >= 0 && dir_freq >= 0, "field: negative encoding frequencies");
    require(density_layers >= 1 && density_width >= 1 && feature_width >= 1, "field: bad density trunk");
    require(color_layers >= 1 && color_width >= 1, "field: bad color head");
    require(!appearance || appearance_dim >= 1, "field: appearance_dim must be positive");
  }
};

template <class S>
inline S softplus(S x) {
  return x > S(20) ? x : std::log1p(std::exp(x));
}
template <class S>
inline S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

template <class S>
struct TileCache {
  std::vector<Eigen::Index> cols;  // batch columns routed to this tile
  Mat<S> pos_enc, dir_enc;
  MlpCache<S> trunk, head;
  Mat<S> raw_density;
};

template <class S>
struct FieldCache {
  std::vector<TileCache<S>> tiles;
  std::vector<int> img;
  Mat<S> sigma, rgb;
  bool valid = false;
};

template <class S>
class RadianceField {
 public:
  RadianceField() = default;

  RadianceField(const FieldConfig& cfg, const Aabb& bounds, int num_images) : cfg_(cfg), bounds_(bounds) {
    cfg_.validate();
    require((bounds.max.array() > bounds.min.array()).all(), "field: empty bounds");
    require(num_images >= 0, "field: negative image count");
    num_images_ = num_images;
    center_ = bounds.center();
    scale_ = 0.5 * bounds.extent().maxCoeff();
    const Vec3 ext = bounds.extent();
    for (int j = 0; j < cfg_.tiles_y; ++j)
      for (int i = 0; i < cfg_.tiles_x; ++i)
        centroids_.emplace_back(bounds.min.x() + (i + 0.5) * ext.x() / cfg_.tiles_x,
                                bounds.min.y() + (j + 0.5) * ext.y() / cfg_.tiles_y);

    pos_enc_ = {cfg_.pos_freq, true};
    dir_enc_ = {cfg_.dir_freq, true};
    Rng rng(cfg_.seed);
    for (int k = 0; k < num_tiles(); ++k) {
      MlpSpec trunk;
      trunk.widths.push_back(pos_enc_.output_width(3));
      for (int l = 0; l < cfg_.density_layers; ++l) trunk.widths.push_back(cfg_.density_width);
      trunk.widths.push_back(1 + cfg_.feature_width);
      const std::string pre = "tile" + std::to_string(k);
      trunks_.emplace_back(trunk, params_, pre + ".density", rng);
      params_[trunks_.back().bias_block(trunk.num_layers() - 1)].value[0] = static_cast<S>(cfg_.density_bias);

      MlpSpec head;
      head.widths.push_back(cfg_.feature_width + dir_enc_.output_width(3) + emb_dim());
      for (int l = 0; l < cfg_.color_layers; ++l) head.widths.push_back(cfg_.color_width);
      head.widths.push_back(3);
      heads_.emplace_back(head, params_, pre + ".color", rng);
    }
    if (cfg_.appearance && num_images_ > 0) {
      appearance_ = params_.add("appearance", {static_cast<std::size_t>(cfg_.appearance_dim),
                                               static_cast<std::size_t>(num_images_)});
    }
  }

  const FieldConfig& config() const { return cfg_; }
  const Aabb& bounds() const { return bounds_; }
  int num_tiles() const { return cfg_.tiles_x * cfg_.tiles_y; }
  int num_images() const { return num_images_; }
  const std::vector<Eigen::Vector2d>& centroids() const { return centroids_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }
  double scale() const { return scale_; }
  const Vec3& center() const { return center_; }
  bool has_appearance() const { return appearance_ != kNone; }
  int emb_dim() const { return cfg_.appearance ? cfg_.appearance_dim : 0; }

  /// Nearest centroid in xy; ties go to the lowest index.
  int route(double x, double y) const {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < num_tiles(); ++k) {
      const double dx = x - centroids_[k].x(), dy = y - centroids_[k].y();
      const double d = dx * dx + dy * dy;
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    return best;
  }

  /// Batched query. pos: 3 x N world points, dir: 3 x N unit directions, img: per column (-1 = default).
  /// Outputs sigma (1 x N, per normalized length unit) and rgb (3 x N).
  void query(const Mat<S>& pos, const Mat<S>& dir, const std::vector<int>& img, Mat<S>& sigma, Mat<S>& rgb,
             FieldCache<S>* cache = nullptr, int only_tile = -1) const {
    const Eigen::Index n = pos.cols();
    require(pos.rows() == 3 && dir.rows() == 3 && dir.cols() == n, "field: bad query shapes");
    require(img.size() == static_cast<std::size_t>(n), "field: image id count mismatch");
    sigma.resize(1, n);
    rgb.resize(3, n);
    std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(num_tiles()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = only_tile >= 0 ? only_tile : route(static_cast<double>(pos(0, i)), static_cast<double>(pos(1, i)));
      groups[static_cast<std::size_t>(k)].push_back(i);
    }
    if (cache) {
      cache->tiles.assign(groups.size(), TileCache<S>());
      cache->img = img;
    }
    const Mat<S> emb_mean = mean_embedding();
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const auto& cols = groups[k];
      if (cols.empty()) continue;
      const auto m = static_cast<Eigen::Index>(cols.size());
      Mat<S> p(3, m), d(3, m);
      for (Eigen::Index j = 0; j < m; ++j) {
        p.col(j) = (pos.col(cols[j]) - center_.cast<S>()) / static_cast<S>(scale_);
        d.col(j) = dir.col(cols[j]);
      }
      Mat<S> pe = pos_enc_.encode(p);
      Mat<S> de = dir_enc_.encode(d);
      TileCache<S>* tc = cache ? &cache->tiles[k] : nullptr;
      Mat<S> t = trunks_[k].forward(params_, pe, nullptr, tc ? &tc->trunk : nullptr);
      const int fw = cfg_.feature_width, dw = static_cast<int>(de.rows()), ew = emb_dim();
      Mat<S> hin(fw + dw + ew, m);
      hin.topRows(fw) = t.bottomRows(fw);
      hin.middleRows(fw, dw) = de;
      if (ew > 0) {
        for (Eigen::Index j = 0; j < m; ++j) hin.col(j).bottomRows(ew) = embedding(img[cols[j]], emb_mean);
      }
      Mat<S> logits = heads_[k].forward(params_, hin, nullptr, tc ? &tc->head : nullptr);
      for (Eigen::Index j = 0; j < m; ++j) {
        sigma(0, cols[j]) = softplus(t(0, j));
        for (int c = 0; c < 3; ++c) rgb(c, cols[j]) = sigmoid(logits(c, j));
      }
      if (tc) {
        tc->cols = cols;
        tc->pos_enc = std::move(pe);
        tc->dir_enc = std::move(de);
        tc->raw_density = t.topRows(1);
      }
    }
    if (cache) {
      cache->sigma = sigma;
      cache->rgb = rgb;
      cache->valid = true;
    }
  }

  /// Accumulates parameter gradients; optionally returns gradients w.r.t. world positions and directions.
  void backward(const FieldCache<S>& cache, const Mat<S>& g_sigma, const Mat<S>& g_rgb, Mat<S>* g_pos = nullptr,
                Mat<S>* g_dir = nullptr) {
    if (!cache.valid) throw ValidationError("field: backward without a recorded forward pass");
    const Eigen::Index n = cache.sigma.cols();
    require(g_sigma.cols() == n && g_rgb.cols() == n, "field: gradient shape mismatch");
    if (g_pos) *g_pos = Mat<S>::Zero(3, n);
    if (g_dir) *g_dir = Mat<S>::Zero(3, n);
    const int fw = cfg_.feature_width, ew = emb_dim();
    for (std::size_t k = 0; k < cache.tiles.size(); ++k) {
      const TileCache<S>& tc = cache.tiles[k];
      if (tc.cols.empty()) continue;
      const auto m = static_cast<Eigen::Index>(tc.cols.size());
      const int dw = static_cast<int>(tc.dir_enc.rows());
      Mat<S> g_logits(3, m), g_raw(1, m);
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index c = tc.cols[j];
        for (int ch = 0; ch < 3; ++ch) {
          const S v = cache.rgb(ch, c);
          g_logits(ch, j) = g_rgb(ch, c) * v * (S(1) - v);
        }
        g_raw(0, j) = g_sigma(0, c) * sigmoid(tc.raw_density(0, j));
      }
      const bool need_dir = g_dir != nullptr;
      Mat<S> g_hin;
      heads_[k].backward(params_, tc.head, g_logits, nullptr, &g_hin);
      if (ew > 0 && appearance_ != kNone) {
        auto& blk = params_[appearance_];
        Vec<S> g_mean = Vec<S>::Zero(ew);
        for (Eigen::Index j = 0; j < m; ++j) {
          const int id = cache.img[static_cast<std::size_t>(tc.cols[j])];
          if (id < 0) g_mean += g_hin.col(j).bottomRows(ew);  // the default is the mean embedding
          else blk.grad_mat().col(id) += g_hin.col(j).bottomRows(ew);
        }
        if (num_images_ > 0 && !g_mean.isZero(0)) blk.grad_mat().colwise() += g_mean / static_cast<S>(num_images_);
      }
      Mat<S> g_t(1 + fw, m);
      g_t.topRows(1) = g_raw;
      g_t.bottomRows(fw) = g_hin.topRows(fw);
      Mat<S> g_pe;
      trunks_[k].backward(params_, tc.trunk, g_t, nullptr, g_pos ? &g_pe : nullptr);
      if (g_pos) {
        const Mat<S> gp = pos_enc_.backward(tc.pos_enc, g_pe, 3) / static_cast<S>(scale_);
        for (Eigen::Index j = 0; j < m; ++j) g_pos->col(tc.cols[j]) = gp.col(j);
      }
      if (need_dir) {
        const Mat<S> gd = dir_enc_.backward(tc.dir_enc, Mat<S>(g_hin.middleRows(fw, dw)), 3);
        for (Eigen::Index j = 0; j < m; ++j) g_dir->col(tc.cols[j]) = gd.col(j);
      }
    }
  }

  /// Single-point query (tests, tools). Rejects non-unit directions.
  std::pair<Eigen::Vector3d, double> query_point(const Vec3& p, const Vec3& d, int img = -1, int tile = -1) const {
    if (std::abs(d.norm() - 1.0) > 1e-6) throw ValidationError("field: direction must be unit length");
    Mat<S> sigma, rgb;
    query(p.cast<S>(), d.cast<S>(), {img}, sigma, rgb, nullptr, tile);
    return {rgb.col(0).template cast<double>(), static_cast<double>(sigma(0, 0))};
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  Mat<S> mean_embedding() const {
    if (appearance_ == kNone) return Mat<S>::Zero(emb_dim(), 1);
    return params_[appearance_].mat().rowwise().mean();
  }

  Eigen::Map<const Vec<S>> embedding(int id, const Mat<S>& mean) const {
    if (id < 0 || appearance_ == kNone) return {mean.data(), mean.rows()};
    if (id >= num_images_) throw ValidationError("field: image id out of range");
    return {params_[appearance_].value.data() + static_cast<std::size_t>(id) * emb_dim(), emb_dim()};
  }

  FieldConfig cfg_;
  Aabb bounds_;
  int num_images_ = 0;
  Vec3 center_ = Vec3::Zero();
  double scale_ = 1.0;
  std::vector<Eigen::Vector2d> centroids_;
  PositionalEncoding pos_enc_, dir_enc_;
  ParamStore<S> params_;
  std::vector<Mlp<S>> trunks_, heads_;
  std::size_t appearance_ = kNone;
};

}  // namespace asrf::field
