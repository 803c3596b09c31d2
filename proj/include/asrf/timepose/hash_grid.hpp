// One-dimensional multi-resolution feature grid with three-node quadratic interpolation.
//
// A level of resolution R covers normalized time [0, 1] with R cells. For x = t * R,
// n = floor(x) and u = x - n, the feature is
//   w0(u) G(n-1) + w1(u) G(n) + w2(u) G(n+1),
//   w0 = u(u-1)/2,  w1 = 1 - u^2,  w2 = u(u+1)/2,
// the Lagrange basis on nodes {-1, 0, 1} evaluated at u. Node indices span [-1, R+1].
#pragma once

#include "asrf/common.hpp"

#include <array>
#include <cstdint>

namespace asrf::timepose {

struct QuadraticWeights {
  std::array<double, 3> w{};   // for nodes n-1, n, n+1
  std::array<double, 3> dw{};  // d w / d u
};

inline QuadraticWeights quadratic_weights(double u) {
  QuadraticWeights q;
  q.w = {0.5 * u * (u - 1.0), 1.0 - u * u, 0.5 * u * (u + 1.0)};
  q.dw = {u - 0.5, -2.0 * u, u + 0.5};
  return q;
}

struct HashLevel {
  int resolution = 16;
  int features = 2;
  bool dense = true;
  std::size_t table_size = 0;  // rows of the feature table
  std::uint64_t prime = 1;     // multiplier of the index hash

  static HashLevel make(int resolution, int features, std::size_t max_dense_nodes, std::size_t hash_table_size,
                        std::uint64_t prime, bool force_hash = false) {
    require(resolution >= 2, "HashLevel: resolution must be >= 2");
    require(features >= 1, "HashLevel: need at least one feature");
    HashLevel l;
    l.resolution = resolution;
    l.features = features;
    const auto nodes = static_cast<std::size_t>(resolution) + 3;
    l.dense = !force_hash && nodes <= max_dense_nodes;
    l.table_size = l.dense ? nodes : hash_table_size;
    require(l.table_size >= 1, "HashLevel: empty table");
    l.prime = prime;
    return l;
  }

  /// Table row for grid node k in [-1, R+1].
  std::size_t slot(long k) const {
    const auto shifted = static_cast<std::uint64_t>(k + 1);
    if (dense) return static_cast<std::size_t>(shifted);
    return static_cast<std::size_t>((shifted * prime) % table_size);
  }
};

struct InterpPoint {
  long n = 0;
  double u = 0.0;
  bool clamped = false;
  QuadraticWeights q;
};

/// Locates t_norm on the level; out-of-range queries are clamped to [0, 1] and flagged.
inline InterpPoint locate(const HashLevel& level, double t_norm) {
  InterpPoint p;
  if (!(t_norm >= 0.0 && t_norm <= 1.0)) {
    p.clamped = true;
    t_norm = std::isnan(t_norm) ? 0.0 : std::clamp(t_norm, 0.0, 1.0);
  }
  const double x = t_norm * level.resolution;
  p.n = static_cast<long>(std::floor(x));
  p.u = x - static_cast<double>(p.n);
  p.q = quadratic_weights(p.u);
  return p;
}

/// Interpolated feature (length F). `table` is column-major {F, table_size}.
template <class S>
Vec<S> hash_interp(const HashLevel& level, const S* table, double t_norm, bool* clamped = nullptr) {
  const InterpPoint p = locate(level, t_norm);
  if (clamped) *clamped = p.clamped;
  Vec<S> out = Vec<S>::Zero(level.features);
  for (int k = 0; k < 3; ++k) {
    const S* node = table + level.slot(p.n - 1 + k) * level.features;
    for (int f = 0; f < level.features; ++f) out[f] += static_cast<S>(p.q.w[k]) * node[f];
  }
  return out;
}

}  // namespace asrf::timepose
