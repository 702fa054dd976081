#include "pancal/stretch.hpp"

#include <cmath>

#include "pancal/geometry.hpp"

namespace pancal {

namespace {

void check_k(double k) {
  if (!(k > 0.0) || !std::isfinite(k)) throw std::domain_error("stretch factor must be positive");
}

double source_colat(double psi_dst, double k) {
  // tan(psi_dst) = k * tan(psi_src); the two-argument form stays continuous
  // across the equator.
  return std::atan2(std::sin(psi_dst), k * std::cos(psi_dst));
}

/// Distance factor expressed at the destination row: equals
/// kappa(psi_src; k) with psi_src the pre-image colatitude of psi_dst.
double row_distance_factor(double psi_dst, double k) {
  const double s = std::sin(psi_dst), c = std::cos(psi_dst);
  return k / std::sqrt(s * s + k * k * c * c);
}

}  // namespace

double kappa(double v, double k, int height) {
  check_k(k);
  if (height <= 0) throw std::domain_error("height must be positive");
  if (v < -0.5 - 1e-9 || v > height - 0.5 + 1e-9) {
    throw std::domain_error("row outside image domain");
  }
  const double psi = colat_of_row(v, height);
  const double s = std::sin(psi), c = std::cos(psi);
  return std::sqrt(k * k * s * s + c * c);
}

Panorama stretch_image(const Panorama& pano, double k) {
  check_k(k);
  if (k == 1.0) return pano;
  Panorama out = Panorama::create(pano.width, pano.height);

  if (pano.tag) {
    // The stretch is a scene scaling about the camera center along the
    // camera's horizontal plane. A unit-scale tag has no anchored center yet,
    // so it re-anchors at the current camera; an existing scale only composes
    // when both stretches share that center and plane.
    const RenderTag& t = *pano.tag;
    if (t.scale_xy == 1.0) {
      RenderTag nt = t;
      nt.anchor = t.camera;
      nt.scale_xy = k;
      out.tag = nt;
    } else {
      const bool same_center = (t.camera.translation - t.anchor.translation).norm() < 1e-9;
      const bool same_plane = (t.camera.rotation.col(2) - t.anchor.rotation.col(2)).norm() < 1e-9;
      if (same_center && same_plane) {
        RenderTag nt = t;
        nt.scale_xy *= k;
        out.tag = nt;
      }
    }
  }

  for (int v = 0; v < pano.height; ++v) {
    const double psi_src = source_colat(colat_of_row(v, pano.height), k);
    const double v_src = row_of_colat(psi_src, pano.height);
    for (int u = 0; u < pano.width; ++u) {
      const Eigen::Vector3f c = sample_rgb(pano, u, v_src);
      float* dst = out.px(u, v);
      for (int ch = 0; ch < 3; ++ch) dst[ch] = c[ch];
    }
  }
  return out;
}

DepthMap stretch_depth(const DepthMap& depth, double k) {
  check_k(k);
  if (k == 1.0) return depth;
  DepthMap out = DepthMap::create(depth.width, depth.height);
  for (int v = 0; v < depth.height; ++v) {
    const double psi_dst = colat_of_row(v, depth.height);
    const double psi_src = source_colat(psi_dst, k);
    const double v_src = row_of_colat(psi_src, depth.height);
    const double factor = row_distance_factor(psi_dst, k);
    for (int u = 0; u < depth.width; ++u) {
      const size_t idx = static_cast<size_t>(v) * depth.width + u;
      const auto d = sample_depth(depth, u, v_src);
      if (d) {
        out.depth[idx] = static_cast<float>(*d * factor);
      } else {
        out.valid[idx] = 0;
      }
    }
  }
  return out;
}

}  // namespace pancal
