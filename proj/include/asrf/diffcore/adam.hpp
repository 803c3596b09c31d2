#pragma once

#include "asrf/diffcore/param_store.hpp"

#include <vector>

namespace asrf::diffcore {

struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> lr_scale;  // optional per-block multiplier on lr

  AdamState() = default;
  template <class S>
  explicit AdamState(const ParamStore<S>& store, double lr_ = 1e-3) : lr(lr_) {
    for (const auto& b : store) {
      m.emplace_back(b.size(), 0.0);
      v.emplace_back(b.size(), 0.0);
    }
  }
};

/// One bias-corrected Adam update, then zeroes the gradients.
template <class S>
void adam_step(ParamStore<S>& store, AdamState& st) {
  require(st.m.size() == store.num_blocks() && st.v.size() == store.num_blocks(), "adam_step: state/store mismatch");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  require(st.lr_scale.empty() || st.lr_scale.size() == store.num_blocks(), "adam_step: lr_scale/store mismatch");
  const double step_base = st.lr * std::sqrt(c2) / c1;
  const double eps_hat = st.eps * std::sqrt(c2);
  std::size_t bi = 0;
  for (auto& b : store) {
    auto& m = st.m[bi];
    auto& v = st.v[bi];
    require(m.size() == b.size() && v.size() == b.size(), "adam_step: moment shape mismatch for " + b.name);
    const double step_size = st.lr_scale.empty() ? step_base : step_base * st.lr_scale[bi];
    for (std::size_t k = 0; k < b.size(); ++k) {
      const double g = static_cast<double>(b.grad[k]);
      m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * g;
      v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * g * g;
      b.value[k] = static_cast<S>(static_cast<double>(b.value[k]) - step_size * m[k] / (std::sqrt(v[k]) + eps_hat));
      b.grad[k] = S(0);
    }
    ++bi;
  }
}

}  // namespace asrf::diffcore
