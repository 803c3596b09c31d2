// Image, depth and pose metrics. Everything accumulates in double.
#pragma once

#include "asrf/json_util.hpp"
#include "asrf/synth/image.hpp"

#include <cmath>
#include <fstream>
#include <vector>

namespace asrf::metrics {

using synth::DepthMap;
using synth::ImageRGB;

inline constexpr double kPsnrCap = 99.0;

inline double mse(const ImageRGB& a, const ImageRGB& b) {
  require(a.width == b.width && a.height == b.height && a.data.size() == b.data.size(), "metrics: image shape mismatch");
  require(!a.data.empty(), "metrics: empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

inline double psnr_from_mse(double m) { return m < 1e-10 ? kPsnrCap : std::min(kPsnrCap, -10.0 * std::log10(m)); }

inline double psnr(const ImageRGB& a, const ImageRGB& b) { return psnr_from_mse(mse(a, b)); }

/// Rec. 601 luma, row-major height x width.
inline Eigen::MatrixXd to_gray(const ImageRGB& img) {
  Eigen::MatrixXd g(img.height, img.width);
  for (int v = 0; v < img.height; ++v)
    for (int u = 0; u < img.width; ++u) {
      const float* p = img.px(u, v);
      g(v, u) = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  return g;
}

inline Eigen::MatrixXd gaussian_window(int size = 11, double sigma = 1.5) {
  Eigen::MatrixXd w(size, size);
  const double c = 0.5 * (size - 1);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) w(i, j) = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
  return w / w.sum();
}

/// Mean SSIM over every fully contained 11x11 window (no padding).
inline double ssim_gray(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "ssim: shape mismatch");
  constexpr int kWin = 11;
  require(a.rows() >= kWin && a.cols() >= kWin, "ssim: image smaller than the 11x11 window");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Eigen::MatrixXd w = gaussian_window(kWin, 1.5);
  const Eigen::Index rows = a.rows() - kWin + 1, cols = a.cols() - kWin + 1;
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto pa = a.block(r, c, kWin, kWin).array();
      const auto pb = b.block(r, c, kWin, kWin).array();
      const double mu_a = (w.array() * pa).sum(), mu_b = (w.array() * pb).sum();
      const double saa = (w.array() * pa * pa).sum() - mu_a * mu_a;
      const double sbb = (w.array() * pb * pb).sum() - mu_b * mu_b;
      const double sab = (w.array() * pa * pb).sum() - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * sab + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2));
    }
  }
  return total / static_cast<double>(rows * cols);
}

inline double ssim(const ImageRGB& a, const ImageRGB& b) {
  require(a.width == b.width && a.height == b.height, "ssim: image shape mismatch");
  return ssim_gray(to_gray(a), to_gray(b));
}

struct DepthScores {
  double rmse = 0.0, rmse_log = 0.0;
  double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;  // percent
  std::size_t count = 0;
};

/// Accumulates masked depth residuals so several views can be pooled.
class DepthAccumulator {
 public:
  void add(double f, double g) {
    if (!(f > 0.0 && g > 0.0)) throw ValidationError("depth_metrics: masked depths must be positive");
    sq_ += (f - g) * (f - g);
    const double l = std::log(f) - std::log(g);
    sq_log_ += l * l;
    const double ratio = std::max(f / g, g / f);
    if (ratio < 1.25) ++hit_[0];
    if (ratio < 1.25 * 1.25) ++hit_[1];
    if (ratio < 1.25 * 1.25 * 1.25) ++hit_[2];
    ++n_;
  }
  std::size_t count() const { return n_; }
  DepthScores scores() const {
    if (n_ == 0) throw ValidationError("depth_metrics: empty mask");
    const double n = static_cast<double>(n_);
    return {std::sqrt(sq_ / n), std::sqrt(sq_log_ / n), 100.0 * hit_[0] / n, 100.0 * hit_[1] / n, 100.0 * hit_[2] / n, n_};
  }

 private:
  double sq_ = 0.0, sq_log_ = 0.0;
  std::size_t hit_[3] = {0, 0, 0};
  std::size_t n_ = 0;
};

inline DepthScores depth_metrics(const std::vector<double>& f, const std::vector<double>& g, const std::vector<bool>& mask) {
  require(f.size() == g.size() && f.size() == mask.size(), "depth_metrics: size mismatch");
  DepthAccumulator acc;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (mask[i]) acc.add(f[i], g[i]);
  return acc.scores();
}

struct MetricsBundle {
  double psnr = 0.0;
  double ssim = 0.0;
  double depth_rmse = 0.0;
  double depth_rmse_log = 0.0;
  double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
  double rot_err_deg = 0.0;
  double trans_err_m = 0.0;
  double valid_fraction = 0.0;

  void set_depth(const DepthScores& d) {
    depth_rmse = d.rmse;
    depth_rmse_log = d.rmse_log;
    delta1 = d.delta1;
    delta2 = d.delta2;
    delta3 = d.delta3;
  }

  Json to_json() const {
    return Json{{"psnr", psnr},
                {"ssim", ssim},
                {"lpips", "n/a"},
                {"depth_rmse", depth_rmse},
                {"depth_rmse_log", depth_rmse_log},
                {"delta1", delta1},
                {"delta2", delta2},
                {"delta3", delta3},
                {"rot_err_deg", rot_err_deg},
                {"trans_err_m", trans_err_m},
                {"valid_fraction", valid_fraction}};
  }
};

struct ViewRow {
  std::size_t index = 0;
  double t = 0.0;
  double psnr = 0.0, ssim = 0.0;
  double depth_rmse = 0.0;  // NaN when the view has no valid pixel
  double valid_fraction = 0.0;
};

inline void write_view_csv(const std::string& path, const std::vector<ViewRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "view,t,psnr,ssim,depth_rmse,valid_fraction\n";
  f.precision(17);
  for (const auto& r : rows)
    f << r.index << ',' << r.t << ',' << r.psnr << ',' << r.ssim << ',' << r.depth_rmse << ',' << r.valid_fraction << '\n';
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace asrf::metrics
