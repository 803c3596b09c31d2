// Baseline: piecewise-linear translation and slerped rotation between keyframes.
#pragma once

#include "asrf/timepose/losses.hpp"

#include <algorithm>
#include <vector>

namespace asrf::timepose {

/// Keyframes must be sorted by time; queries outside the span clamp to the end keyframes.
inline Pose linear_interp_pose(const std::vector<TimedPoseSample>& keyframes, double t) {
  require(!keyframes.empty(), "linear_interp_pose: no keyframes");
  if (t <= keyframes.front().t) return keyframes.front().pose;
  if (t >= keyframes.back().t) return keyframes.back().pose;
  const auto it = std::upper_bound(keyframes.begin(), keyframes.end(), t,
                                   [](double v, const TimedPoseSample& s) { return v < s.t; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double span = b.t - a.t;
  const double s = span > 0 ? (t - a.t) / span : 0.0;
  if (s == 0.0) return a.pose;
  return Pose(a.pose.q().slerp(s, b.pose.q()), (1.0 - s) * a.pose.x() + s * b.pose.x());
}

}  // namespace asrf::timepose
