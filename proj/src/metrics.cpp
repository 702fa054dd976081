#include "pancal/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace pancal {

DepthMetrics depth_metrics(const DepthMap& predicted, const DepthMap& reference) {
  if (predicted.width != reference.width || predicted.height != reference.height) {
    throw std::domain_error("depth maps have different dimensions");
  }
  DepthMetrics m;
  double sum_abs = 0.0, sum_abs_rel = 0.0, sum_sq_rel = 0.0, sum_sq = 0.0, sum_sq_log = 0.0;
  size_t in1 = 0, in2 = 0, in3 = 0;
  const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;

  for (size_t i = 0; i < predicted.depth.size(); ++i) {
    if (!predicted.valid[i] || !reference.valid[i]) continue;
    const double d = predicted.depth[i];
    const double g = reference.depth[i];
    if (d <= 0.0 || g <= 0.0) {
      ++m.n_excluded_nonpositive;
      continue;
    }
    const double err = d - g;
    sum_abs += std::abs(err);
    sum_abs_rel += std::abs(err) / g;
    sum_sq_rel += err * err / g;
    sum_sq += err * err;
    const double dl = std::log(d) - std::log(g);
    sum_sq_log += dl * dl;
    const double ratio = d > g ? d / g : g / d;
    if (ratio < t1) ++in1;
    if (ratio < t2) ++in2;
    if (ratio < t3) ++in3;
    ++m.n_pixels;
  }

  if (m.n_pixels == 0) throw std::runtime_error("no comparable pixels for depth metrics");
  const double n = static_cast<double>(m.n_pixels);
  m.mae = sum_abs / n;
  m.abs_rel = sum_abs_rel / n;
  m.sq_rel = sum_sq_rel / n;
  m.rmse = std::sqrt(sum_sq / n);
  m.rmse_log = std::sqrt(sum_sq_log / n);
  m.inlier_1 = in1 / n;
  m.inlier_2 = in2 / n;
  m.inlier_3 = in3 / n;
  return m;
}

}  // namespace pancal
