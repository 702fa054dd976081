#include "pancal/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace pancal {

namespace {

void check_pano_dims(int width, int height) {
  if (width != 2 * height || height <= 0) {
    throw std::domain_error("equirectangular image requires width == 2 * height > 0");
  }
}

}  // namespace

double wrap_col(double u, int width) {
  double w = static_cast<double>(width);
  double r = std::fmod(u, w);
  if (r < 0.0) r += w;
  if (r >= w) r = 0.0;  // fmod can land exactly on w after the add
  return r;
}

Eigen::Vector3d pixel_to_dir(double u, double v, int width, int height) {
  check_pano_dims(width, height);
  if (v < -0.5 - 1e-9 || v > height - 0.5 + 1e-9 || u < -0.5 - 1e-9 || u > width - 0.5 + 1e-9) {
    throw std::domain_error("pixel coordinate outside image domain");
  }
  const double phi = lon_of_col(u, width);
  const double psi = colat_of_row(v, height);
  const double sp = std::sin(psi);
  return {sp * std::cos(phi), sp * std::sin(phi), std::cos(psi)};
}

std::pair<double, double> dir_to_pixel(const Eigen::Vector3d& dir, int width, int height) {
  check_pano_dims(width, height);
  const double n = dir.norm();
  if (std::abs(n - 1.0) > 1e-6) throw std::domain_error("direction must be unit length");
  const double z = std::clamp(dir.z() / n, -1.0, 1.0);
  const double psi = std::acos(z);
  const double v = row_of_colat(psi, height);
  const double xy = std::hypot(dir.x(), dir.y());
  if (xy < 1e-12) return {0.0, v};
  const double phi = std::atan2(dir.y(), dir.x());
  return {wrap_col(col_of_lon(phi, width), width), v};
}

PixelDepth project_point(const Eigen::Vector3d& point, int width, int height) {
  const double r = point.norm();
  if (r < 1e-12) throw std::domain_error("cannot project a point at the camera center");
  auto [u, v] = dir_to_pixel(point / r, width, height);
  return {u, v, r};
}

PointCloud backproject(const DepthMap& depth) {
  check_pano_dims(depth.width, depth.height);
  PointCloud cloud;
  cloud.points.reserve(depth.pixel_count());
  cloud.source_pixel.reserve(depth.pixel_count());
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const size_t idx = static_cast<size_t>(v) * depth.width + u;
      if (!depth.valid[idx]) continue;
      cloud.points.push_back(pixel_to_dir(u, v, depth.width, depth.height) *
                             static_cast<double>(depth.depth[idx]));
      cloud.source_pixel.push_back(static_cast<int32_t>(idx));
    }
  }
  return cloud;
}

namespace {

struct BilinearTaps {
  int u0, u1, v0, v1;
  double fu, fv;
};

BilinearTaps taps(double u, double v, int width, int height) {
  u = wrap_col(u, width);
  v = std::clamp(v, 0.0, static_cast<double>(height - 1));
  BilinearTaps t;
  t.u0 = static_cast<int>(std::floor(u));
  t.v0 = static_cast<int>(std::floor(v));
  t.fu = u - t.u0;
  t.fv = v - t.v0;
  t.u0 = std::min(t.u0, width - 1);
  t.v0 = std::min(t.v0, height - 1);
  t.u1 = (t.u0 + 1) % width;
  t.v1 = std::min(t.v0 + 1, height - 1);
  return t;
}

}  // namespace

Eigen::Vector3f sample_rgb(const Panorama& pano, double u, double v) {
  const BilinearTaps t = taps(u, v, pano.width, pano.height);
  Eigen::Vector3f out = Eigen::Vector3f::Zero();
  const double w00 = (1 - t.fu) * (1 - t.fv), w10 = t.fu * (1 - t.fv);
  const double w01 = (1 - t.fu) * t.fv, w11 = t.fu * t.fv;
  const float* p00 = pano.px(t.u0, t.v0);
  const float* p10 = pano.px(t.u1, t.v0);
  const float* p01 = pano.px(t.u0, t.v1);
  const float* p11 = pano.px(t.u1, t.v1);
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<float>(w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c]);
  }
  return out;
}

std::optional<double> sample_depth(const DepthMap& depth, double u, double v) {
  const BilinearTaps t = taps(u, v, depth.width, depth.height);
  const int us[4] = {t.u0, t.u1, t.u0, t.u1};
  const int vs[4] = {t.v0, t.v0, t.v1, t.v1};
  const double ws[4] = {(1 - t.fu) * (1 - t.fv), t.fu * (1 - t.fv), (1 - t.fu) * t.fv,
                        t.fu * t.fv};
  double sum = 0.0, wsum = 0.0;
  for (int i = 0; i < 4; ++i) {
    const size_t idx = static_cast<size_t>(vs[i]) * depth.width + us[i];
    if (!depth.valid[idx]) continue;
    sum += ws[i] * depth.depth[idx];
    wsum += ws[i];
  }
  if (wsum < 1e-12) return std::nullopt;
  return sum / wsum;
}

Pose mirror_conjugate(const Pose& pose) {
  const Eigen::Vector3d f(-1.0, 1.0, 1.0), g(1.0, -1.0, 1.0);
  Pose out;
  out.rotation = f.asDiagonal() * pose.rotation * g.asDiagonal();
  out.translation = f.asDiagonal() * pose.translation;
  return out;
}

Panorama flip_horizontal(const Panorama& pano) {
  Panorama out = Panorama::create(pano.width, pano.height);
  if (pano.tag) {
    RenderTag t = *pano.tag;
    t.camera = mirror_conjugate(t.camera);
    t.anchor = mirror_conjugate(t.anchor);
    t.mirrored = !t.mirrored;
    out.tag = t;
  }
  for (int v = 0; v < pano.height; ++v) {
    for (int u = 0; u < pano.width; ++u) {
      const float* src = pano.px(pano.width - 1 - u, v);
      std::copy(src, src + 3, out.px(u, v));
    }
  }
  return out;
}

DepthMap flip_horizontal(const DepthMap& depth) {
  DepthMap out = DepthMap::create(depth.width, depth.height);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const size_t dst = static_cast<size_t>(v) * depth.width + u;
      const size_t src = static_cast<size_t>(v) * depth.width + (depth.width - 1 - u);
      out.depth[dst] = depth.depth[src];
      out.valid[dst] = depth.valid[src];
    }
  }
  return out;
}

namespace {

std::optional<long> integral_column_shift(double angle, int width) {
  const double cols = angle * width / kTwoPi;
  const double rounded = std::round(cols);
  if (std::abs(cols - rounded) < 1e-9) return static_cast<long>(rounded);
  return std::nullopt;
}

long wrap_index(long u, int width) {
  long r = u % width;
  if (r < 0) r += width;
  return r;
}

void compose_rotation_tag(std::optional<RenderTag>& tag, const Eigen::Matrix3d& rot) {
  if (tag) tag->camera.rotation = tag->camera.rotation * rot;
}

}  // namespace

Panorama rotate_yaw(const Panorama& pano, double angle) {
  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  if (auto shift = integral_column_shift(angle, pano.width)) {
    Panorama out = Panorama::create(pano.width, pano.height);
    out.tag = pano.tag;
    compose_rotation_tag(out.tag, rot);
    for (int v = 0; v < pano.height; ++v) {
      for (int u = 0; u < pano.width; ++u) {
        const float* src = pano.px(static_cast<int>(wrap_index(u + *shift, pano.width)), v);
        std::copy(src, src + 3, out.px(u, v));
      }
    }
    return out;
  }
  return rotate_camera(pano, rot);
}

DepthMap rotate_yaw(const DepthMap& depth, double angle) {
  if (auto shift = integral_column_shift(angle, depth.width)) {
    DepthMap out = DepthMap::create(depth.width, depth.height);
    for (int v = 0; v < depth.height; ++v) {
      for (int u = 0; u < depth.width; ++u) {
        const size_t dst = static_cast<size_t>(v) * depth.width + u;
        const size_t src = static_cast<size_t>(v) * depth.width +
                           wrap_index(u + *shift, depth.width);
        out.depth[dst] = depth.depth[src];
        out.valid[dst] = depth.valid[src];
      }
    }
    return out;
  }
  // Non-integral yaw of a depth map: resample with validity weighting.
  DepthMap out = DepthMap::create(depth.width, depth.height);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double du = angle * depth.width / kTwoPi;
      const auto s = sample_depth(depth, u + du, v);
      const size_t dst = static_cast<size_t>(v) * depth.width + u;
      if (s) {
        out.depth[dst] = static_cast<float>(*s);
      } else {
        out.valid[dst] = 0;
      }
    }
  }
  return out;
}

Panorama rotate_camera(const Panorama& pano, const Eigen::Matrix3d& rot) {
  Panorama out = Panorama::create(pano.width, pano.height);
  out.tag = pano.tag;
  compose_rotation_tag(out.tag, rot);
  for (int v = 0; v < pano.height; ++v) {
    for (int u = 0; u < pano.width; ++u) {
      const Eigen::Vector3d d = rot * pixel_to_dir(u, v, pano.width, pano.height);
      auto [su, sv] = dir_to_pixel(d, pano.width, pano.height);
      const Eigen::Vector3f c = sample_rgb(pano, su, sv);
      float* dst = out.px(u, v);
      for (int ch = 0; ch < 3; ++ch) dst[ch] = c[ch];
    }
  }
  return out;
}

}  // namespace pancal
