#include "pancal/view_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pancal/geometry.hpp"

namespace pancal {

Pose sample_perturb_pose(const PerturbConfig& cfg, Rng& rng) {
  if (cfg.max_translation < 0.0) throw std::domain_error("max_translation must be >= 0");
  const double yaw = (2.0 * rng.uniform() - 1.0) * kPi;
  Eigen::Vector3d t;
  for (int i = 0; i < 3; ++i) t[i] = (2.0 * rng.uniform() - 1.0) * cfg.max_translation;
  return Pose::yaw(yaw, t);
}

Pose sample_perturb_pose(const PerturbConfig& cfg, const DepthMap& depth, Rng& rng) {
  if (!(cfg.max_depth_fraction > 0.0)) {
    throw std::domain_error("max_depth_fraction must be positive");
  }
  Pose pose = sample_perturb_pose(cfg, rng);
  const double norm = pose.translation.norm();
  if (norm < 1e-12) return pose;

  // Minimum valid depth over the 3x3 pixels around the translation direction;
  // the neighborhood guards against landing next to an occluding edge.
  const auto [pu, pv] = dir_to_pixel(pose.translation / norm, depth.width, depth.height);
  const int cu = static_cast<int>(std::lround(pu));
  const int cv = static_cast<int>(std::lround(pv));
  double dmin = std::numeric_limits<double>::infinity();
  for (int dv = -1; dv <= 1; ++dv) {
    const int v = std::clamp(cv + dv, 0, depth.height - 1);
    for (int du = -1; du <= 1; ++du) {
      int u = (cu + du) % depth.width;
      if (u < 0) u += depth.width;
      const size_t i = static_cast<size_t>(v) * depth.width + u;
      if (depth.valid[i]) dmin = std::min(dmin, static_cast<double>(depth.depth[i]));
    }
  }
  if (!std::isfinite(dmin)) dmin = depth.mean_valid();

  const double cap = cfg.max_depth_fraction * dmin;
  if (norm > cap) pose.translation *= cap / norm;
  return pose;
}

SynthView warp_panorama(const Panorama& image, const DepthMap& depth, const Pose& pose,
                        int fill_radius) {
  if (image.width != depth.width || image.height != depth.height) {
    throw std::domain_error("image and depth dimensions differ");
  }
  if (!pose.is_orthonormal(1e-6)) throw std::domain_error("warp rotation is not orthonormal");
  const int w = image.width, h = image.height;

  SynthView view;
  view.image = Panorama::create(w, h);
  view.depth = DepthMap::create(w, h, false);
  view.fill_dist.assign(static_cast<size_t>(w) * h, 255);
  view.src_index.assign(static_cast<size_t>(w) * h, -1);

  std::vector<double> zbuf(static_cast<size_t>(w) * h,
                           std::numeric_limits<double>::infinity());

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const size_t src = static_cast<size_t>(v) * w + u;
      if (!depth.valid[src]) continue;
      const Eigen::Vector3d p =
          pixel_to_dir(u, v, w, h) * static_cast<double>(depth.depth[src]);
      const Eigen::Vector3d q = pose.to_local(p);
      const double r = q.norm();
      if (r < 1e-9) continue;
      auto [pu, pv] = dir_to_pixel(q / r, w, h);
      int du = static_cast<int>(std::floor(pu + 0.5));
      int dv = static_cast<int>(std::floor(pv + 0.5));
      if (du >= w) du -= w;
      if (du < 0) du += w;
      if (dv < 0) dv = 0;
      if (dv >= h) dv = h - 1;
      const size_t dst = static_cast<size_t>(dv) * w + du;
      if (r < zbuf[dst]) {
        zbuf[dst] = r;
        const float* sp = image.px(u, v);
        float* dp = &view.image.rgb[dst * 3];
        dp[0] = sp[0];
        dp[1] = sp[1];
        dp[2] = sp[2];
        view.depth.depth[dst] = static_cast<float>(r);
        view.depth.valid[dst] = 1;
        view.fill_dist[dst] = 0;
        view.src_index[dst] = static_cast<int32_t>(src);
      }
    }
  }

  // Ring-search hole fill from pure splats only.
  if (fill_radius > 0) {
    const std::vector<uint8_t> splat = view.fill_dist;  // snapshot: 0 where splatted
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const size_t dst = static_cast<size_t>(v) * w + u;
        if (view.fill_dist[dst] != 255) continue;
        for (int ring = 1; ring <= fill_radius && view.fill_dist[dst] == 255; ++ring) {
          for (int dv = -ring; dv <= ring && view.fill_dist[dst] == 255; ++dv) {
            const int sv = v + dv;
            if (sv < 0 || sv >= h) continue;
            for (int du = -ring; du <= ring; ++du) {
              if (std::max(std::abs(du), std::abs(dv)) != ring) continue;
              int su = u + du;
              su %= w;
              if (su < 0) su += w;
              const size_t s = static_cast<size_t>(sv) * w + su;
              if (splat[s] != 0) continue;
              view.image.rgb[dst * 3 + 0] = view.image.rgb[s * 3 + 0];
              view.image.rgb[dst * 3 + 1] = view.image.rgb[s * 3 + 1];
              view.image.rgb[dst * 3 + 2] = view.image.rgb[s * 3 + 2];
              view.depth.depth[dst] = view.depth.depth[s];
              view.depth.valid[dst] = 1;
              view.fill_dist[dst] = static_cast<uint8_t>(ring);
              view.src_index[dst] = view.src_index[s];
              break;
            }
          }
        }
      }
    }
  }

  view.image.tag = image.tag;
  if (view.image.tag) view.image.tag->camera = view.image.tag->camera.compose(pose);
  return view;
}

}  // namespace pancal
