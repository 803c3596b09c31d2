#pragma once

#include "asrf/common.hpp"

#include <vector>

namespace asrf::diffcore {

struct PositionalEncoding {
  int num_freq = 0;
  bool include_input = true;

  int output_width(int dim) const { return dim * ((include_input ? 1 : 0) + 2 * num_freq); }

  /// Rows: [x (optional), sin(2^0 pi x), cos(2^0 pi x), sin(2^1 pi x), ...], each block `dim` rows.
  template <class S>
  Mat<S> encode(const Mat<S>& x) const {
    require(num_freq >= 0, "PositionalEncoding: negative frequency count");
    const Eigen::Index d = x.rows();
    Mat<S> out(output_width(static_cast<int>(d)), x.cols());
    Eigen::Index r = 0;
    if (include_input) {
      out.topRows(d) = x;
      r = d;
    }
    for (int k = 0; k < num_freq; ++k) {
      const S f = static_cast<S>(std::ldexp(kPi, k));
      const Mat<S> arg = f * x;
      out.middleRows(r, d) = arg.array().sin().matrix();
      out.middleRows(r + d, d) = arg.array().cos().matrix();
      r += 2 * d;
    }
    return out;
  }

  /// Chain rule from gradients w.r.t. the encoding back to the raw coordinates.
  /// `encoded` is the forward output (its sin/cos rows give the derivatives).
  template <class S>
  Mat<S> backward(const Mat<S>& encoded, const Mat<S>& grad_encoded, Eigen::Index dim) const {
    Mat<S> g = Mat<S>::Zero(dim, encoded.cols());
    Eigen::Index r = 0;
    if (include_input) {
      g += grad_encoded.topRows(dim);
      r = dim;
    }
    for (int k = 0; k < num_freq; ++k) {
      const S f = static_cast<S>(std::ldexp(kPi, k));
      // d sin = f cos, d cos = -f sin
      g.array() += f * (grad_encoded.middleRows(r, dim).array() * encoded.middleRows(r + dim, dim).array() -
                        grad_encoded.middleRows(r + dim, dim).array() * encoded.middleRows(r, dim).array());
      r += 2 * dim;
    }
    return g;
  }
};

/// Single-vector convenience wrapper.
inline std::vector<double> positional_encoding(const std::vector<double>& x, int n_freq, bool include_input = true) {
  Mat<double> m(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = x[i];
  const Mat<double> e = PositionalEncoding{n_freq, include_input}.encode(m);
  return {e.data(), e.data() + e.size()};
}

}  // namespace asrf::diffcore
