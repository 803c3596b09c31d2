// Finite differences and forward-mode duals: the independent routes the adjoints are checked against.
#pragma once

#include "asrf/common.hpp"

#include <functional>
#include <vector>

namespace asrf::diffcore {

/// Central-difference gradient of a scalar function of a flat parameter vector.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor): relative error that tolerates exact zeros.
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Worst entrywise relative error between two gradient vectors, with the floor scaled to the
/// gradient's overall magnitude so tiny entries are compared in absolute terms.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor_frac = 1e-3) {
  require(a.size() == b.size(), "max_relative_error: size mismatch");
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  const double floor = std::max(scale * floor_frac, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

/// Dual number for single-tangent forward mode.
template <class S>
struct Dual {
  S v{};
  S d{};
  Dual() = default;
  Dual(S value, S tangent = S(0)) : v(value), d(tangent) {}
};

template <class S> Dual<S> operator+(Dual<S> a, Dual<S> b) { return {a.v + b.v, a.d + b.d}; }
template <class S> Dual<S> operator-(Dual<S> a, Dual<S> b) { return {a.v - b.v, a.d - b.d}; }
template <class S> Dual<S> operator*(Dual<S> a, Dual<S> b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
template <class S> Dual<S> operator/(Dual<S> a, Dual<S> b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
template <class S> Dual<S> operator-(Dual<S> a) { return {-a.v, -a.d}; }
template <class S> Dual<S> sin(Dual<S> a) { return {std::sin(a.v), a.d * std::cos(a.v)}; }
template <class S> Dual<S> cos(Dual<S> a) { return {std::cos(a.v), -a.d * std::sin(a.v)}; }
template <class S> Dual<S> exp(Dual<S> a) { const S e = std::exp(a.v); return {e, a.d * e}; }
template <class S> Dual<S> max(Dual<S> a, S c) { return a.v > c ? a : Dual<S>{c, S(0)}; }
/// Right-continuous floor: the tangent of the fractional part is 1 everywhere.
template <class S> S floor(Dual<S> a) { return std::floor(a.v); }

/// d f / d t at t for f : Dual -> vector<Dual>, by one forward sweep.
template <class F>
std::vector<double> forward_derivative(F&& f, double t) {
  const auto out = f(Dual<double>(t, 1.0));
  std::vector<double> d;
  d.reserve(out.size());
  for (const auto& o : out) d.push_back(o.d);
  return d;
}

}  // namespace asrf::diffcore
