// Batched fully-connected networks with hand-written adjoints.
//
// Columns are samples. Hidden layers use ReLU; the output layer is linear unless the spec
// asks for ReLU. A forward pass may carry a tangent (one directional derivative per column);
// the backward pass then also differentiates that tangent, which is what the speed loss needs.
#pragma once

#include "asrf/common.hpp"
#include "asrf/diffcore/param_store.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace asrf::diffcore {

enum class Activation { None, ReLU };

struct MlpSpec {
  /// input width, hidden widths..., output width
  std::vector<int> widths;
  /// Linear layer i (1-based into the hidden stack) receives [h; skip] as input.
  std::vector<int> skip_layers;
  int skip_width = 0;
  Activation output = Activation::None;

  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  bool is_skip(int layer) const {
    return std::find(skip_layers.begin(), skip_layers.end(), layer) != skip_layers.end();
  }
  int layer_input_width(int layer) const { return widths[layer] + (is_skip(layer) ? skip_width : 0); }

  void validate() const {
    require(widths.size() >= 3, "MlpSpec: need at least one hidden layer");
    for (int w : widths) require(w > 0, "MlpSpec: widths must be positive");
    for (int s : skip_layers) {
      require(s >= 1 && s < num_layers(), "MlpSpec: skip layer index out of range");
    }
    require(skip_layers.empty() || skip_width > 0, "MlpSpec: skip layers need a positive skip width");
  }
};

template <class S>
struct MlpCache {
  std::vector<Mat<S>> inputs;   // input of each linear layer
  std::vector<Mat<S>> dinputs;  // their tangents, when recorded
  Mat<S> output;
  bool has_tangent = false;
  bool valid() const { return !inputs.empty(); }
};

template <class S>
class Mlp {
 public:
  Mlp() = default;

  /// Registers weights as `<prefix>.l<i>.w` {out, in} and `<prefix>.l<i>.b` {out}.
  Mlp(MlpSpec spec, ParamStore<S>& store, const std::string& prefix, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    for (int i = 0; i < spec_.num_layers(); ++i) {
      const auto in = static_cast<std::size_t>(spec_.layer_input_width(i));
      const auto out = static_cast<std::size_t>(spec_.widths[i + 1]);
      const std::size_t w = store.add(prefix + ".l" + std::to_string(i) + ".w", {out, in});
      const std::size_t b = store.add(prefix + ".l" + std::to_string(i) + ".b", {out});
      glorot_uniform<S>(store[w], in, out, rng);
      weights_.push_back(w);
      biases_.push_back(b);
    }
  }

  const MlpSpec& spec() const { return spec_; }
  std::size_t weight_block(int layer) const { return weights_.at(layer); }
  std::size_t bias_block(int layer) const { return biases_.at(layer); }

  Mat<S> forward(const ParamStore<S>& store, const Mat<S>& x, const Mat<S>* skip = nullptr,
                 MlpCache<S>* cache = nullptr) const {
    return run(store, x, skip, nullptr, nullptr, nullptr, cache);
  }

  /// Forward pass carrying tangents dx (and dskip). Returns outputs; tangent of outputs in *dy.
  Mat<S> forward_tangent(const ParamStore<S>& store, const Mat<S>& x, const Mat<S>& dx, const Mat<S>* skip,
                         const Mat<S>* dskip, Mat<S>* dy, MlpCache<S>* cache = nullptr) const {
    require(dx.rows() == x.rows() && dx.cols() == x.cols(), "Mlp: tangent shape mismatch");
    return run(store, x, skip, &dx, dskip, dy, cache);
  }

  /// Accumulates parameter gradients; optionally returns gradients w.r.t. inputs.
  /// `grad_dy` is the gradient w.r.t. the output tangent (needs a tangent cache).
  void backward(ParamStore<S>& store, const MlpCache<S>& cache, const Mat<S>& grad_y, const Mat<S>* grad_dy = nullptr,
                Mat<S>* grad_x = nullptr, Mat<S>* grad_skip = nullptr, Mat<S>* grad_dx = nullptr) const {
    if (!cache.valid()) throw ValidationError("Mlp::backward called without a recorded forward pass");
    const bool tangent = grad_dy != nullptr;
    if (tangent && !cache.has_tangent) throw ValidationError("Mlp::backward: tangent gradient without tangent cache");
    const Eigen::Index n = cache.output.cols();
    require(grad_y.rows() == spec_.output_width() && grad_y.cols() == n, "Mlp::backward: gradient shape mismatch");

    Mat<S> g = grad_y;
    Mat<S> gt;
    if (tangent) gt = *grad_dy;
    if (spec_.output == Activation::ReLU) {
      g = (cache.output.array() > S(0)).select(g, S(0));
      if (tangent) gt = (cache.output.array() > S(0)).select(gt, S(0));
    }
    if (grad_skip) *grad_skip = Mat<S>::Zero(spec_.skip_width, n);

    for (int i = spec_.num_layers() - 1; i >= 0; --i) {
      auto& wb = store[weights_[i]];
      auto& bb = store[biases_[i]];
      const Mat<S>& in = cache.inputs[i];
      wb.grad_mat().noalias() += g * in.transpose();
      if (tangent) wb.grad_mat().noalias() += gt * cache.dinputs[i].transpose();
      bb.grad_vec() += g.rowwise().sum();

      const bool need_input = i > 0 || grad_x != nullptr || grad_skip != nullptr || grad_dx != nullptr;
      if (!need_input) break;
      Mat<S> gin = wb.mat().transpose() * g;
      Mat<S> gtin;
      if (tangent) gtin = wb.mat().transpose() * gt;
      const int hw = spec_.widths[i];
      if (spec_.is_skip(i)) {
        if (grad_skip) *grad_skip += gin.bottomRows(spec_.skip_width);
        gin.conservativeResize(hw, Eigen::NoChange);
        if (tangent) gtin.conservativeResize(hw, Eigen::NoChange);
      }
      if (i == 0) {
        if (grad_x) *grad_x = std::move(gin);
        if (grad_dx && tangent) *grad_dx = std::move(gtin);
        break;
      }
      // ReLU mask of the previous layer's activation (top rows of this layer's input).
      const auto mask = (in.topRows(hw).array() > S(0));
      g = mask.select(gin, S(0));
      if (tangent) gt = mask.select(gtin, S(0));
    }
  }

 private:
  Mat<S> run(const ParamStore<S>& store, const Mat<S>& x, const Mat<S>* skip, const Mat<S>* dx, const Mat<S>* dskip,
             Mat<S>* dy, MlpCache<S>* cache) const {
    require(x.rows() == spec_.input_width(), "Mlp: input width " + std::to_string(x.rows()) + " != " +
                                                 std::to_string(spec_.input_width()));
    const Eigen::Index n = x.cols();
    const bool tangent = dx != nullptr;
    if (!spec_.skip_layers.empty()) {
      require(skip != nullptr && skip->rows() == spec_.skip_width && skip->cols() == n, "Mlp: bad skip input");
      if (tangent) require(dskip != nullptr && dskip->rows() == skip->rows() && dskip->cols() == n,
                           "Mlp: bad skip tangent");
    }
    if (cache) {
      cache->inputs.assign(spec_.num_layers(), Mat<S>());
      cache->dinputs.assign(tangent ? spec_.num_layers() : 0, Mat<S>());
      cache->has_tangent = tangent;
    }

    Mat<S> a = x;
    Mat<S> da;
    if (tangent) da = *dx;
    for (int i = 0; i < spec_.num_layers(); ++i) {
      if (spec_.is_skip(i)) {
        Mat<S> cat(a.rows() + spec_.skip_width, n);
        cat << a, *skip;
        a = std::move(cat);
        if (tangent) {
          Mat<S> dcat(da.rows() + spec_.skip_width, n);
          dcat << da, *dskip;
          da = std::move(dcat);
        }
      }
      const auto w = store[weights_[i]].mat();
      const auto b = store[biases_[i]].vec();
      Mat<S> z = w * a;
      z.colwise() += b;
      Mat<S> dz;
      if (tangent) dz = w * da;
      const bool relu = i + 1 < spec_.num_layers() || spec_.output == Activation::ReLU;
      if (relu) {
        if (tangent) dz = (z.array() > S(0)).select(dz, S(0));
        z = z.cwiseMax(S(0));
      }
      if (cache) {
        cache->inputs[i] = std::move(a);
        if (tangent) cache->dinputs[i] = std::move(da);
      }
      a = std::move(z);
      if (tangent) da = std::move(dz);
    }
    if (cache) cache->output = a;
    if (dy) *dy = std::move(da);
    return a;
  }

  MlpSpec spec_;
  std::vector<std::size_t> weights_, biases_;
};

}  // namespace asrf::diffcore
