#pragma once

#include <cstddef>

#include "pancal/types.hpp"

namespace pancal {

/// Standard depth accuracy summary over mutually valid pixels with positive
/// ground truth. Thresholded inlier rates are strict: a ratio exactly equal
/// to the threshold does not count.
struct DepthMetrics {
  double mae = 0.0;
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double inlier_1 = 0.0;  // max(d/g, g/d) < 1.25
  double inlier_2 = 0.0;  //               < 1.25^2
  double inlier_3 = 0.0;  //               < 1.25^3
  size_t n_pixels = 0;
  size_t n_excluded_nonpositive = 0;
};

/// Compares a prediction against reference depth. Pixels are used when valid
/// in both maps and both values are positive; non-positive pixels among the
/// mutually valid set are excluded and counted. Throws when dimensions differ
/// or no pixel survives.
DepthMetrics depth_metrics(const DepthMap& predicted, const DepthMap& reference);

}  // namespace pancal
