#pragma once

#include "pancal/types.hpp"

namespace pancal {

/// Distance change factor of a point at colatitude `psi` (from the +z pole)
/// when the scene is scaled by k along x and y: a point at distance r moves
/// to distance r * sqrt(k^2 sin^2 psi + cos^2 psi). `v` is the image row in
/// [-0.5, height - 0.5]; k must be positive.
double kappa(double v, double k, int height);

/// Image of the scene scaled by k in the horizontal plane about the camera.
/// Columns are preserved; each output row resamples the source column at the
/// pre-image colatitude psi_src = atan2(sin psi_dst, k * cos psi_dst).
/// k = 1 returns the input unchanged. Provenance is composed when the image's
/// existing scale anchor is compatible with the current camera (same center,
/// same vertical axis); otherwise it is dropped.
Panorama stretch_image(const Panorama& pano, double k);

/// Depth map of the scene scaled by k in the horizontal plane about the
/// camera: rows are resampled like stretch_image and values are multiplied by
/// the exact per-row distance factor, so stretch_depth(stretch_depth(d, k), 1/k)
/// is the identity up to interpolation.
DepthMap stretch_depth(const DepthMap& depth, double k);

}  // namespace pancal
