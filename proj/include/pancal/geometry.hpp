#pragma once

#include <optional>
#include <utility>

#include "pancal/types.hpp"

namespace pancal {

/// Equirectangular conventions. Pixel centers sit at integer coordinates;
/// the continuous pixel domain is u in [-0.5, width - 0.5], v in
/// [-0.5, height - 0.5]. Row v maps to colatitude psi = pi * (v + 0.5) / H
/// measured from the +z pole, column u maps to longitude
/// phi = 2 * pi * (u + 0.5) / W - pi, with phi = 0 on +x and phi = pi / 2 on +y.
/// The equator lies on row H / 2 - 0.5.

inline double colat_of_row(double v, int height) { return kPi * (v + 0.5) / height; }
inline double row_of_colat(double psi, int height) { return psi * height / kPi - 0.5; }
inline double lon_of_col(double u, int width) { return kTwoPi * (u + 0.5) / width - kPi; }
inline double col_of_lon(double phi, int width) { return (phi + kPi) * width / kTwoPi - 0.5; }

/// Wraps a column coordinate into [0, width).
double wrap_col(double u, int width);

/// Unit view direction of pixel (u, v). Throws std::domain_error when the
/// coordinate leaves the pixel domain or width != 2 * height.
Eigen::Vector3d pixel_to_dir(double u, double v, int width, int height);

/// Inverse of pixel_to_dir: (u, v) with u in [0, width) and
/// v in [-0.5, height - 0.5]. At the poles the longitude is undefined and
/// u = 0 is returned. Requires dir to be unit length within 1e-6.
std::pair<double, double> dir_to_pixel(const Eigen::Vector3d& dir, int width, int height);

/// Projects a camera-frame point: pixel plus radial distance.
/// Throws std::domain_error for points within 1e-12 of the origin.
struct PixelDepth {
  double u;
  double v;
  double range;
};
PixelDepth project_point(const Eigen::Vector3d& point, int width, int height);

/// Camera-frame point cloud of all valid pixels, with source_pixel indices.
PointCloud backproject(const DepthMap& depth);

/// Bilinear RGB sample; wraps horizontally, clamps rows to pixel centers.
Eigen::Vector3f sample_rgb(const Panorama& pano, double u, double v);

/// Validity-weighted bilinear depth sample. Empty when every contributing
/// pixel is invalid.
std::optional<double> sample_depth(const DepthMap& depth, double u, double v);

/// Mirror about the vertical axis (u -> width - 1 - u). A flipped view
/// depicts the mirrored scene, so provenance toggles RenderTag::mirrored and
/// conjugates the camera pose with mirror_conjugate.
Panorama flip_horizontal(const Panorama& pano);
DepthMap flip_horizontal(const DepthMap& depth);

/// Pose of a flipped view within the mirrored world: if an image of the scene
/// from pose P is flipped, the result is an image of the x-mirrored scene
/// from pose (F R G, F t) with F = diag(-1,1,1), G = diag(1,-1,1).
/// Self-inverse.
Pose mirror_conjugate(const Pose& pose);

/// View from the same position with the camera yawed by `angle` (right-handed
/// about +z). Exact column roll when angle * width / (2 * pi) is integral,
/// bilinear resampling otherwise. Provenance is composed when present.
Panorama rotate_yaw(const Panorama& pano, double angle);
DepthMap rotate_yaw(const DepthMap& depth, double angle);

/// View from the same position with the camera rotated by `rot` (camera-frame,
/// so the new camera pose is R_cam * rot). Bilinear resampling.
Panorama rotate_camera(const Panorama& pano, const Eigen::Matrix3d& rot);

}  // namespace pancal
