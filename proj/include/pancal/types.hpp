#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace pancal {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

/// Rigid transform. (rotation, translation) is the pose of a frame expressed
/// in its parent frame: X_parent = rotation * X_local + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }

  static Pose yaw(double angle, const Eigen::Vector3d& t = Eigen::Vector3d::Zero()) {
    Pose p;
    p.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    p.translation = t;
    return p;
  }

  Pose inverse() const {
    Pose p;
    p.rotation = rotation.transpose();
    p.translation = -(rotation.transpose() * translation);
    return p;
  }

  /// this ∘ other: other expressed relative to this frame.
  Pose compose(const Pose& other) const {
    Pose p;
    p.rotation = rotation * other.rotation;
    p.translation = rotation * other.translation + translation;
    return p;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return rotation * x + translation; }

  /// Maps a parent-frame point into this pose's local frame.
  Eigen::Vector3d to_local(const Eigen::Vector3d& x) const {
    return rotation.transpose() * (x - translation);
  }

  bool is_orthonormal(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < tol &&
           std::abs(rotation.determinant() - 1.0) < tol;
  }
};

/// Provenance of a synthesized or rendered panorama: the image depicts
/// scale(mirror^m(scene)) from `camera`, where the scale is an anisotropic
/// (x, y) scaling by scale_xy about `anchor`'s center along `anchor`'s axes,
/// and `mirrored` marks one application of the world mirror x -> -x. Carried
/// through the geometric operators so that scene-backed predictors can look
/// up ground truth for derived images.
struct RenderTag {
  int scene_id = -1;
  Pose camera;
  double scale_xy = 1.0;
  Pose anchor;
  bool mirrored = false;
};

/// Equirectangular RGB panorama, channels interleaved row-major, values in [0,1].
/// width == 2 * height.
struct Panorama {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;
  std::optional<RenderTag> tag;

  static Panorama create(int width, int height) {
    if (width != 2 * height || height <= 0) {
      throw std::domain_error("panorama requires width == 2 * height > 0");
    }
    Panorama p;
    p.width = width;
    p.height = height;
    p.rgb.assign(static_cast<size_t>(width) * height * 3, 0.0f);
    return p;
  }

  size_t pixel_count() const { return static_cast<size_t>(width) * height; }

  float* px(int u, int v) { return &rgb[(static_cast<size_t>(v) * width + u) * 3]; }
  const float* px(int u, int v) const { return &rgb[(static_cast<size_t>(v) * width + u) * 3]; }
};

/// Per-pixel radial depth in meters aligned with a Panorama. Invalid pixels
/// carry valid == 0; their depth value is unspecified (NaN when serialized).
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<uint8_t> valid;

  static DepthMap create(int width, int height, bool all_valid = true) {
    if (width <= 0 || height <= 0) throw std::domain_error("depth map dimensions must be positive");
    DepthMap d;
    d.width = width;
    d.height = height;
    d.depth.assign(static_cast<size_t>(width) * height, 0.0f);
    d.valid.assign(static_cast<size_t>(width) * height, all_valid ? 1 : 0);
    return d;
  }

  size_t pixel_count() const { return static_cast<size_t>(width) * height; }

  float at(int u, int v) const { return depth[static_cast<size_t>(v) * width + u]; }
  bool is_valid(int u, int v) const { return valid[static_cast<size_t>(v) * width + u] != 0; }

  size_t valid_count() const {
    size_t n = 0;
    for (uint8_t m : valid) n += m != 0;
    return n;
  }

  /// Mean depth over valid pixels. Throws if no pixel is valid.
  double mean_valid() const {
    double sum = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < depth.size(); ++i) {
      if (valid[i]) {
        sum += depth[i];
        ++n;
      }
    }
    if (n == 0) throw std::runtime_error("depth map has no valid pixels");
    return sum / static_cast<double>(n);
  }
};

/// Camera-centered 3D points with optional per-point unit normals and source
/// pixel provenance (index v * width + u into the originating depth map).
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;      // empty or same length as points
  std::vector<uint8_t> normal_valid;         // parallel to normals when present
  std::vector<int32_t> source_pixel;         // empty or same length as points

  size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
};

}  // namespace pancal
