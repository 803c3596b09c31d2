// Scalar reverse-mode tape. Small computations only (pose chains, loss composition);
// the batched network layers carry their own hand-written adjoints.
#pragma once

#include "asrf/common.hpp"
#include "asrf/diffcore/param_store.hpp"

#include <vector>

namespace asrf::diffcore {

class Tape;

class Var {
 public:
  Var() = default;
  double value() const { return value_; }
  Tape* tape() const { return tape_; }
  int index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* t, int i, double v) : tape_(t), index_(i), value_(v) {}
  Tape* tape_ = nullptr;
  int index_ = -1;
  double value_ = 0.0;
};

class Tape {
 public:
  Var variable(double v) { return push(v, -1, 0.0, -1, 0.0); }

  Var push(double v, int a, double da, int b, double db) {
    nodes_.push_back({a, b, da, db});
    return Var(this, static_cast<int>(nodes_.size()) - 1, v);
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Adjoint of every recorded node with respect to `out`.
  std::vector<double> gradient(const Var& out) const {
    if (out.tape() != this || out.index() < 0 || out.index() >= static_cast<int>(nodes_.size())) {
      throw ValidationError("Tape::gradient: output was not recorded on this tape");
    }
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[out.index()] = 1.0;
    for (int i = out.index(); i >= 0; --i) {
      const double g = adj[i];
      if (g == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.a >= 0) adj[n.a] += g * n.da;
      if (n.b >= 0) adj[n.b] += g * n.db;
    }
    return adj;
  }

 private:
  struct Node {
    int a, b;
    double da, db;
  };
  std::vector<Node> nodes_;
};

namespace detail {
inline Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) throw ValidationError("Var: operands on different tapes");
  return a.tape();
}
inline Tape* tape_of(const Var& a) {
  if (a.tape() == nullptr) throw ValidationError("Var: not recorded on a tape");
  return a.tape();
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  return detail::common_tape(a, b)->push(a.value() + b.value(), a.index(), 1.0, b.index(), 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return detail::common_tape(a, b)->push(a.value() - b.value(), a.index(), 1.0, b.index(), -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return detail::common_tape(a, b)->push(a.value() * b.value(), a.index(), b.value(), b.index(), a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.value();
  return detail::common_tape(a, b)->push(a.value() * inv, a.index(), inv, b.index(), -a.value() * inv * inv);
}
inline Var operator-(const Var& a) { return detail::tape_of(a)->push(-a.value(), a.index(), -1.0, -1, 0.0); }
inline Var operator+(const Var& a, double c) { return detail::tape_of(a)->push(a.value() + c, a.index(), 1.0, -1, 0.0); }
inline Var operator+(double c, const Var& a) { return a + c; }
inline Var operator-(const Var& a, double c) { return a + (-c); }
inline Var operator-(double c, const Var& a) { return detail::tape_of(a)->push(c - a.value(), a.index(), -1.0, -1, 0.0); }
inline Var operator*(const Var& a, double c) { return detail::tape_of(a)->push(a.value() * c, a.index(), c, -1, 0.0); }
inline Var operator*(double c, const Var& a) { return a * c; }
inline Var operator/(const Var& a, double c) { return a * (1.0 / c); }

inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return detail::tape_of(a)->push(e, a.index(), e, -1, 0.0);
}
inline Var log(const Var& a) { return detail::tape_of(a)->push(std::log(a.value()), a.index(), 1.0 / a.value(), -1, 0.0); }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return detail::tape_of(a)->push(s, a.index(), 0.5 / s, -1, 0.0);
}
inline Var sin(const Var& a) { return detail::tape_of(a)->push(std::sin(a.value()), a.index(), std::cos(a.value()), -1, 0.0); }
inline Var cos(const Var& a) { return detail::tape_of(a)->push(std::cos(a.value()), a.index(), -std::sin(a.value()), -1, 0.0); }
inline Var square(const Var& a) { return detail::tape_of(a)->push(a.value() * a.value(), a.index(), 2.0 * a.value(), -1, 0.0); }

/// Leaf variables for every parameter of `store`, block order.
template <class S>
std::vector<Var> bind_params(Tape& tape, const ParamStore<S>& store) {
  std::vector<Var> vars;
  vars.reserve(store.num_params());
  for (const auto& b : store)
    for (const auto& v : b.value) vars.push_back(tape.variable(static_cast<double>(v)));
  return vars;
}

/// Reverse pass from `loss`, accumulating d loss / d p into the store's gradients.
template <class S>
void backward(const Var& loss, const std::vector<Var>& params, ParamStore<S>& store) {
  require(params.size() == store.num_params(), "backward: parameter binding does not match store");
  const auto adj = detail::tape_of(loss)->gradient(loss);
  std::size_t k = 0;
  for (auto& b : store) {
    for (auto& g : b.grad) {
      const int idx = params[k++].index();
      g += static_cast<S>(adj[idx]);
    }
  }
}

}  // namespace asrf::diffcore
