// Asynchronous RGB-D pairing: RGB frames every `rgb_stride` base frames, each depth frame a
// fixed or random fraction of the RGB period later.
#pragma once

#include "asrf/common.hpp"

#include <string>
#include <vector>

namespace asrf::synth {

enum class ResampleMode { Fixed, Random };

inline ResampleMode parse_resample_mode(const std::string& s) {
  if (s == "fixed") return ResampleMode::Fixed;
  if (s == "random") return ResampleMode::Random;
  throw ValidationError("resample: unknown mode '" + s + "' (expected fixed or random)");
}

inline std::string to_string(ResampleMode m) { return m == ResampleMode::Fixed ? "fixed" : "random"; }

struct ResampleProtocol {
  ResampleMode mode = ResampleMode::Fixed;
  int rgb_stride = 10;
  double x = 30.0;  // percent of the RGB period
  double y = 50.0;  // random mode upper bound, percent
  std::uint64_t seed = 11;

  void validate() const {
    require(rgb_stride >= 1, "resample: rgb_stride must be >= 1");
    require(x >= 0 && x <= 100, "resample: x must lie in [0, 100]");
    if (mode == ResampleMode::Random) {
      require(y >= 0 && y <= 100, "resample: y must lie in [0, 100]");
      require(x <= y, "resample: random mode requires x <= y");
    }
  }
};

struct DepthPlan {
  std::size_t pair = 0;  // index of the RGB frame it is paired with
  std::size_t base_index = 0;
  int offset = 0;  // base frames after its RGB frame
};

struct ResamplePlan {
  std::vector<std::size_t> rgb;  // base indices
  std::vector<DepthPlan> depth;
  std::size_t dropped_past_end = 0;      // whole pairs
  std::size_t dropped_non_monotone = 0;  // depth frames only; their RGB frame is kept
};

/// Offset in base frames for one pair; random mode draws the percent from U[x, y].
inline int draw_offset(const ResampleProtocol& p, Rng& rng) {
  const double pct = p.mode == ResampleMode::Fixed ? p.x : rng.uniform(p.x, p.y);
  return static_cast<int>(std::lround(p.rgb_stride * pct / 100.0));
}

inline ResamplePlan plan_resample(std::size_t n_base, const ResampleProtocol& p) {
  p.validate();
  ResamplePlan plan;
  Rng rng(p.seed);
  bool have_prev = false;
  std::size_t prev_depth = 0;
  for (std::size_t i = 0; i * static_cast<std::size_t>(p.rgb_stride) < n_base; ++i) {
    const std::size_t rgb = i * static_cast<std::size_t>(p.rgb_stride);
    const int off = draw_offset(p, rng);  // drawn for every pair so the stream does not depend on drops
    const std::size_t depth = rgb + static_cast<std::size_t>(off);
    if (depth >= n_base) {
      ++plan.dropped_past_end;
      continue;
    }
    plan.rgb.push_back(rgb);
    if (have_prev && depth <= prev_depth) {
      ++plan.dropped_non_monotone;
      continue;
    }
    plan.depth.push_back({plan.rgb.size() - 1, depth, off});
    prev_depth = depth;
    have_prev = true;
  }
  return plan;
}

}  // namespace asrf::synth
