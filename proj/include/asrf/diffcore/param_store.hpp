#pragma once

#include "asrf/common.hpp"

#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace asrf::diffcore {

/// Named flat parameter arrays with matching gradient accumulators.
/// Matrices are stored column-major with shape {rows, cols}.
template <class S>
class ParamStore {
 public:
  // Aligned so vectorized reductions over a block always sum in the same order, whatever the heap
  // address; otherwise repeated runs differ in the last bits.
  using Buffer = std::vector<S, Eigen::aligned_allocator<S>>;

  struct Block {
    std::string name;
    std::vector<std::size_t> shape;
    Buffer value;
    Buffer grad;

    std::size_t size() const { return value.size(); }
    Eigen::Map<Mat<S>> mat() { return {value.data(), rows(), cols()}; }
    Eigen::Map<const Mat<S>> mat() const { return {value.data(), rows(), cols()}; }
    Eigen::Map<Mat<S>> grad_mat() { return {grad.data(), rows(), cols()}; }
    Eigen::Map<Vec<S>> vec() { return {value.data(), static_cast<Eigen::Index>(value.size())}; }
    Eigen::Map<const Vec<S>> vec() const { return {value.data(), static_cast<Eigen::Index>(value.size())}; }
    Eigen::Map<Vec<S>> grad_vec() { return {grad.data(), static_cast<Eigen::Index>(grad.size())}; }
    Eigen::Index rows() const { return shape.empty() ? 1 : static_cast<Eigen::Index>(shape[0]); }
    Eigen::Index cols() const {
      Eigen::Index c = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) c *= static_cast<Eigen::Index>(shape[i]);
      return c;
    }
  };

  std::size_t add(const std::string& name, std::vector<std::size_t> shape) {
    require(!index_.count(name), "ParamStore: duplicate block '" + name + "'");
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    blocks_.push_back(Block{name, std::move(shape), Buffer(n, S(0)), Buffer(n, S(0))});
    index_[name] = blocks_.size() - 1;
    return blocks_.size() - 1;
  }

  Block& operator[](std::size_t i) { return blocks_[i]; }
  const Block& operator[](std::size_t i) const { return blocks_[i]; }
  Block& at(const std::string& name) { return blocks_[index_of(name)]; }
  const Block& at(const std::string& name) const { return blocks_[index_of(name)]; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("ParamStore: no block '" + name + "'");
    return it->second;
  }

  std::size_t num_blocks() const { return blocks_.size(); }
  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
  }
  auto begin() { return blocks_.begin(); }
  auto end() { return blocks_.end(); }
  auto begin() const { return blocks_.begin(); }
  auto end() const { return blocks_.end(); }

  void zero_grad() {
    for (auto& b : blocks_) std::fill(b.grad.begin(), b.grad.end(), S(0));
  }

  /// Flattened views, block order. Used by gradient checks and tests.
  std::vector<double> flat_values() const {
    std::vector<double> out;
    out.reserve(num_params());
    for (const auto& b : blocks_) out.insert(out.end(), b.value.begin(), b.value.end());
    return out;
  }
  std::vector<double> flat_grads() const {
    std::vector<double> out;
    out.reserve(num_params());
    for (const auto& b : blocks_) out.insert(out.end(), b.grad.begin(), b.grad.end());
    return out;
  }
  S& flat_value(std::size_t k) {
    for (auto& b : blocks_) {
      if (k < b.size()) return b.value[k];
      k -= b.size();
    }
    throw ValidationError("ParamStore: flat index out of range");
  }

  /// Same block names and shapes.
  bool same_layout(const ParamStore& other) const {
    if (other.blocks_.size() != blocks_.size()) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (blocks_[i].name != other.blocks_[i].name || blocks_[i].shape != other.blocks_[i].shape) return false;
    }
    return true;
  }

 private:
  std::vector<Block> blocks_;
  std::map<std::string, std::size_t> index_;
};

/// Glorot-uniform fill: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)), scaled by `gain`.
template <class S>
void glorot_uniform(typename ParamStore<S>::Block& b, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                    double gain = 1.0) {
  const double a = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : b.value) v = static_cast<S>(rng.uniform(-a, a));
}

}  // namespace asrf::diffcore
