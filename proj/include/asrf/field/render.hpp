// Ray sampling and quadrature volume rendering of color and depth, with adjoints w.r.t. the
// field parameters and the ray origin/direction. Sample distances are treated as constants.
#pragma once

#include "asrf/field/field.hpp"

#include <numeric>

namespace asrf::field {

struct RenderConfig {
  int n_coarse = 32;
  int n_fine = 32;
  bool jitter = true;
  Vec3 background = Vec3::Zero();
  double min_near = 0.05;  // meters; rays start no closer than this
  double opacity_floor = 0.05;  // rendered depth below this opacity is reported invalid

  void validate() const {
    require(n_coarse >= 1 && n_fine >= 0, "render: sample counts must be >= 1 (coarse) and >= 0 (fine)");
    require(min_near >= 0, "render: min_near must be >= 0");
  }
};

/// One sample per uniform bin of [near, far]: bin midpoints, or uniformly jittered inside each bin.
inline std::vector<double> sample_coarse(double near, double far, int n, bool jitter, Rng* rng) {
  require(n >= 1 && near < far, "sample_coarse: need n >= 1 and near < far");
  require(!jitter || rng, "sample_coarse: jitter needs an rng");
  std::vector<double> t(static_cast<std::size_t>(n));
  const double w = (far - near) / n;
  for (int i = 0; i < n; ++i) t[i] = near + (i + (jitter ? rng->uniform() : 0.5)) * w;
  return t;
}

/// Inverse-CDF samples from the piecewise-constant density given by `weights` over equal bins of
/// [near, far]. All-zero weights fall back to uniform. Without an rng, quantiles (k + 0.5) / n are used.
inline std::vector<double> sample_fine(double near, double far, const std::vector<double>& weights, int n, Rng* rng) {
  require(near < far && !weights.empty(), "sample_fine: bad bins");
  const std::size_t nb = weights.size();
  std::vector<double> cdf(nb + 1, 0.0);
  for (std::size_t i = 0; i < nb; ++i) cdf[i + 1] = cdf[i] + std::max(weights[i], 0.0);
  const double total = cdf.back();
  if (!(total > 0.0)) {
    for (std::size_t i = 0; i <= nb; ++i) cdf[i] = static_cast<double>(i) / nb;
  } else {
    for (auto& c : cdf) c /= total;
  }
  const double w = (far - near) / static_cast<double>(nb);
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double u = rng ? rng->uniform() : (k + 0.5) / n;
    // first bin whose upper CDF edge exceeds u (zero-width bins are skipped)
    std::size_t b = static_cast<std::size_t>(std::upper_bound(cdf.begin() + 1, cdf.end(), u) - cdf.begin()) - 1;
    b = std::min(b, nb - 1);
    while (b + 1 < nb && cdf[b + 1] - cdf[b] <= 0.0) ++b;
    const double span = cdf[b + 1] - cdf[b];
    const double a = span > 0 ? std::clamp((u - cdf[b]) / span, 0.0, 1.0) : 0.5;
    t[k] = near + (static_cast<double>(b) + a) * w;
  }
  std::sort(t.begin(), t.end());
  return t;
}

/// Clips a ray against the scene box; false when it misses (or the range is empty).
inline bool clip_ray(Ray& r, const Aabb& box, double min_near) {
  const auto span = synth::intersect_aabb(box, r.o, r.d);
  if (!span) return false;
  r.near = std::max(span->first, min_near);
  r.far = span->second;
  return r.far - r.near > 1e-6;
}

template <class S>
struct RenderOutput {
  Mat<S> color;    // 3 x R
  Mat<S> depth;    // 1 x R, meters (unnormalized sum of w t)
  Mat<S> opacity;  // 1 x R
  Mat<S> weights;  // N x R, in sample order
  Mat<S> t;        // N x R, sorted sample distances
  std::vector<bool> hit;  // ray intersected the scene box
};

template <class S>
struct RenderCache {
  int n = 0;  // samples per ray
  std::vector<Ray> rays;
  std::vector<bool> hit;
  Mat<S> t, delta, sigma, trans, weights;  // N x R
  Mat<S> rgb;                              // 3N x R
  Eigen::MatrixXi group, column;           // N x R: which evaluation batch and column
  FieldCache<S> eval[2];
  Vec3 background = Vec3::Zero();
  bool valid = false;
};

template <class S>
struct RayQuadrature {
  Eigen::Matrix<S, 3, 1> color;
  S depth = S(0);
  S opacity = S(0);
};

/// Quadrature for one ray: w_i = T_i (1 - exp(-sigma_i delta_i)), delta_i = (t_{i+1} - t_i) / unit with
/// t_n = far. Writes weights and transmittances (T_0..T_n, n + 1 entries) when given.
template <class S>
RayQuadrature<S> quadrature(const S* t, const S* sigma, const S* rgb, int n, S far, S unit,
                            const Eigen::Matrix<S, 3, 1>& bg, S* weights = nullptr, S* trans = nullptr,
                            S* delta = nullptr) {
  RayQuadrature<S> q;
  S T = S(1);
  Eigen::Matrix<S, 3, 1> col = Eigen::Matrix<S, 3, 1>::Zero();
  for (int i = 0; i < n; ++i) {
    const S next = i + 1 < n ? t[i + 1] : far;
    const S dl = std::max(next - t[i], S(0)) / unit;
    if (delta) delta[i] = dl;
    if (trans) trans[i] = T;
    const S e = std::exp(-sigma[i] * dl);
    const S w = T * (S(1) - e);
    if (weights) weights[i] = w;
    col += w * Eigen::Map<const Eigen::Matrix<S, 3, 1>>(rgb + 3 * i);
    q.depth += w * t[i];
    T *= e;
  }
  if (trans) trans[n] = T;
  q.color = col + T * bg;
  q.opacity = S(1) - T;
  return q;
}

namespace detail {

template <class S>
void composite(const RadianceField<S>& field, RenderCache<S>& c, RenderOutput<S>& out) {
  const auto R = static_cast<Eigen::Index>(c.rays.size());
  const int n = c.n;
  c.delta = Mat<S>::Zero(n, R);
  c.trans = Mat<S>::Zero(n + 1, R);
  c.weights = Mat<S>::Zero(n, R);
  out.color.resize(3, R);
  out.depth = Mat<S>::Zero(1, R);
  out.opacity = Mat<S>::Zero(1, R);
  const Eigen::Matrix<S, 3, 1> bg = c.background.template cast<S>();
  for (Eigen::Index r = 0; r < R; ++r) {
    if (!c.hit[r]) {
      out.color.col(r) = bg;
      continue;
    }
    const auto q = quadrature<S>(&c.t(0, r), &c.sigma(0, r), &c.rgb(0, r), n, static_cast<S>(c.rays[r].far),
                                 static_cast<S>(field.scale()), bg, &c.weights(0, r), &c.trans(0, r), &c.delta(0, r));
    out.color.col(r) = q.color;
    out.depth(0, r) = q.depth;
    out.opacity(0, r) = q.opacity;
  }
  out.weights = c.weights;
  out.t = c.t;
  out.hit = c.hit;
}

template <class S>
void evaluate_group(const RadianceField<S>& field, const std::vector<Ray>& rays, const std::vector<int>& img,
                    const std::vector<std::vector<double>>& ts, Mat<S>& sigma, Mat<S>& rgb, FieldCache<S>* cache) {
  Eigen::Index total = 0;
  for (const auto& v : ts) total += static_cast<Eigen::Index>(v.size());
  Mat<S> pos(3, total), dir(3, total);
  std::vector<int> ids(static_cast<std::size_t>(total));
  Eigen::Index k = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (double t : ts[r]) {
      pos.col(k) = (rays[r].o + t * rays[r].d).cast<S>();
      dir.col(k) = rays[r].d.cast<S>();
      ids[static_cast<std::size_t>(k)] = img[r];
      ++k;
    }
  }
  field.query(pos, dir, ids, sigma, rgb, cache);
}

}  // namespace detail

/// Renders with caller-chosen sorted sample distances (N per ray). Rays must already carry near/far;
/// the last interval extends to `far`.
template <class S>
void render_samples(const RadianceField<S>& field, const std::vector<Ray>& rays, const std::vector<int>& img,
                    const std::vector<std::vector<double>>& ts, const Vec3& background, RenderOutput<S>& out,
                    RenderCache<S>* cache = nullptr) {
  require(rays.size() == ts.size() && rays.size() == img.size(), "render_samples: size mismatch");
  require(!rays.empty(), "render_samples: no rays");
  const auto n = static_cast<int>(ts.front().size());
  for (const auto& v : ts) require(static_cast<int>(v.size()) == n && n >= 1, "render_samples: ragged samples");
  RenderCache<S> local;
  RenderCache<S>& c = cache ? *cache : local;
  const auto R = static_cast<Eigen::Index>(rays.size());
  c.eval[0] = FieldCache<S>();
  c.eval[1] = FieldCache<S>();
  c.n = n;
  c.rays = rays;
  c.hit.assign(rays.size(), true);
  c.background = background;
  Mat<S> sigma, rgb;
  detail::evaluate_group(field, rays, img, ts, sigma, rgb, cache ? &c.eval[0] : nullptr);
  c.t.resize(n, R);
  c.sigma.resize(n, R);
  c.rgb.resize(3 * n, R);
  c.group = Eigen::MatrixXi::Zero(n, R);
  c.column.resize(n, R);
  for (Eigen::Index r = 0; r < R; ++r) {
    for (int i = 0; i < n; ++i) {
      const Eigen::Index col = r * n + i;
      c.t(i, r) = static_cast<S>(ts[r][i]);
      c.sigma(i, r) = sigma(0, col);
      c.rgb.template block<3, 1>(3 * i, r) = rgb.col(col);
      c.column(i, r) = static_cast<int>(col);
    }
  }
  detail::composite(field, c, out);
  c.valid = cache != nullptr;
}

/// Coarse-to-fine rendering of full rays. Rays get near/far from the field's bounds; rays missing
/// the bounds render as background with zero opacity. `rng` drives jitter and fine sampling.
template <class S>
void render_rays(const RadianceField<S>& field, std::vector<Ray> rays, const std::vector<int>& img,
                 const RenderConfig& cfg, Rng* rng, RenderOutput<S>& out, RenderCache<S>* cache = nullptr) {
  cfg.validate();
  require(rays.size() == img.size() && !rays.empty(), "render_rays: need one image id per ray");
  const bool jitter = cfg.jitter && rng != nullptr;
  const auto R = static_cast<Eigen::Index>(rays.size());
  RenderCache<S> local;
  RenderCache<S>& c = cache ? *cache : local;
  c.eval[0] = FieldCache<S>();
  c.eval[1] = FieldCache<S>();
  c.hit.assign(rays.size(), false);
  c.background = cfg.background;
  const int nc = cfg.n_coarse, nf = cfg.n_fine, n = nc + nf;
  c.n = n;

  std::vector<std::vector<double>> tc(rays.size()), tf(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    c.hit[r] = clip_ray(rays[r], field.bounds(), cfg.min_near);
    if (c.hit[r]) tc[r] = sample_coarse(rays[r].near, rays[r].far, nc, jitter, rng);
  }
  c.rays = rays;

  // Coarse pass
  Mat<S> sig_c, rgb_c;
  detail::evaluate_group(field, rays, img, tc, sig_c, rgb_c, cache ? &c.eval[0] : nullptr);
  Mat<S> sig_f, rgb_f;
  std::vector<Eigen::Index> off_c(rays.size()), off_f(rays.size());
  {
    Eigen::Index k = 0;
    for (std::size_t r = 0; r < rays.size(); ++r) {
      off_c[r] = k;
      k += static_cast<Eigen::Index>(tc[r].size());
    }
  }
  if (nf > 0) {
    const S inv_scale = static_cast<S>(1.0 / field.scale());
    for (std::size_t r = 0; r < rays.size(); ++r) {
      if (!c.hit[r]) continue;
      std::vector<double> w(static_cast<std::size_t>(nc));
      double T = 1.0;
      for (int i = 0; i < nc; ++i) {
        const double next = i + 1 < nc ? tc[r][i + 1] : rays[r].far;
        const double dl = (next - tc[r][i]) * static_cast<double>(inv_scale);
        const double e = std::exp(-static_cast<double>(sig_c(0, off_c[r] + i)) * dl);
        w[i] = T * (1.0 - e);
        T *= e;
      }
      tf[r] = sample_fine(rays[r].near, rays[r].far, w, nf, jitter ? rng : nullptr);
    }
    detail::evaluate_group(field, rays, img, tf, sig_f, rgb_f, cache ? &c.eval[1] : nullptr);
    Eigen::Index k = 0;
    for (std::size_t r = 0; r < rays.size(); ++r) {
      off_f[r] = k;
      k += static_cast<Eigen::Index>(tf[r].size());
    }
  }

  // Merge both passes in distance order.
  c.t = Mat<S>::Zero(n, R);
  c.sigma = Mat<S>::Zero(n, R);
  c.rgb = Mat<S>::Zero(3 * n, R);
  c.group = Eigen::MatrixXi::Constant(n, R, -1);
  c.column = Eigen::MatrixXi::Constant(n, R, -1);
  std::vector<std::pair<double, int>> merged;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (!c.hit[r]) continue;
    merged.clear();
    for (int i = 0; i < nc; ++i) merged.emplace_back(tc[r][i], i);
    for (int i = 0; i < nf; ++i) merged.emplace_back(tf[r][i], nc + i);
    std::stable_sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto rr = static_cast<Eigen::Index>(r);
    for (int s = 0; s < n; ++s) {
      const int src = merged[s].second;
      const bool coarse = src < nc;
      const Eigen::Index col = coarse ? off_c[r] + src : off_f[r] + (src - nc);
      c.t(s, rr) = static_cast<S>(merged[s].first);
      c.sigma(s, rr) = coarse ? sig_c(0, col) : sig_f(0, col);
      c.rgb.template block<3, 1>(3 * s, rr) = coarse ? rgb_c.col(col) : rgb_f.col(col);
      c.group(s, rr) = coarse ? 0 : 1;
      c.column(s, rr) = static_cast<int>(col);
    }
  }
  detail::composite(field, c, out);
  c.valid = cache != nullptr;
}

/// Adjoint of render_rays / render_samples. g_color: 3 x R, g_depth: 1 x R (either may be empty).
/// Accumulates field parameter gradients and, when requested, returns d/d origin and d/d direction (3 x R).
template <class S>
void render_backward(RadianceField<S>& field, const RenderCache<S>& c, const Mat<S>& g_color, const Mat<S>& g_depth,
                     Mat<S>* g_origin = nullptr, Mat<S>* g_dir = nullptr) {
  if (!c.valid) throw ValidationError("render_backward: no recorded forward pass");
  const auto R = static_cast<Eigen::Index>(c.rays.size());
  const int n = c.n;
  const bool has_c = g_color.size() > 0, has_d = g_depth.size() > 0;
  require(!has_c || (g_color.rows() == 3 && g_color.cols() == R), "render_backward: bad color gradient");
  require(!has_d || (g_depth.rows() == 1 && g_depth.cols() == R), "render_backward: bad depth gradient");

  Mat<S> gs[2], gc[2];
  for (int g = 0; g < 2; ++g) {
    const Eigen::Index m = c.eval[g].valid ? c.eval[g].sigma.cols() : 0;
    gs[g] = Mat<S>::Zero(1, m);
    gc[g] = Mat<S>::Zero(3, m);
  }
  const Eigen::Matrix<S, 3, 1> bg = c.background.template cast<S>();
  std::vector<S> e(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < R; ++r) {
    if (!c.hit[r]) continue;
    const Eigen::Matrix<S, 3, 1> gcol = has_c ? Eigen::Matrix<S, 3, 1>(g_color.col(r)) : Eigen::Matrix<S, 3, 1>::Zero();
    const S gd = has_d ? g_depth(0, r) : S(0);
    for (int i = 0; i < n; ++i) e[i] = gcol.dot(c.rgb.template block<3, 1>(3 * i, r)) + gd * c.t(i, r);
    const S e_bg = gcol.dot(bg);
    const S T_final = c.trans(n, r);
    S suffix = S(0);  // sum_{i>k} w_i e_i
    for (int k = n - 1; k >= 0; --k) {
      const S g_sigma = c.delta(k, r) * (c.trans(k + 1, r) * e[k] - suffix - T_final * e_bg);
      suffix += c.weights(k, r) * e[k];
      const int grp = c.group(k, r);
      const int col = c.column(k, r);
      gs[grp](0, col) += g_sigma;
      gc[grp].col(col) += c.weights(k, r) * gcol;
    }
  }
  const bool want_ray = g_origin || g_dir;
  if (g_origin) *g_origin = Mat<S>::Zero(3, R);
  if (g_dir) *g_dir = Mat<S>::Zero(3, R);
  for (int g = 0; g < 2; ++g) {
    if (!c.eval[g].valid || gs[g].cols() == 0) continue;
    Mat<S> gp, gdir;
    field.backward(c.eval[g], gs[g], gc[g], want_ray ? &gp : nullptr, want_ray ? &gdir : nullptr);
    if (!want_ray) continue;
    for (Eigen::Index r = 0; r < R; ++r) {
      if (!c.hit[r]) continue;
      for (int i = 0; i < n; ++i) {
        if (c.group(i, r) != g) continue;
        const int col = c.column(i, r);
        if (g_origin) g_origin->col(r) += gp.col(col);
        if (g_dir) g_dir->col(r) += c.t(i, r) * gp.col(col) + gdir.col(col);
      }
    }
  }
}

}  // namespace asrf::field
