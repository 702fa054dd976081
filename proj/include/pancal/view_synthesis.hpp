#pragma once

#include "pancal/rng.hpp"
#include "pancal/types.hpp"

namespace pancal {

struct PerturbConfig {
  double max_translation = 0.5;    // meters, per axis
  double max_depth_fraction = 0.5; // cap on |t| as a fraction of the depth toward t
  uint64_t seed = 0;
};

/// Random pose of a virtual camera relative to the current one: yaw uniform in
/// [-pi, pi) about world z, translation components i.i.d. uniform in
/// [-max_translation, max_translation].
Pose sample_perturb_pose(const PerturbConfig& cfg, Rng& rng);

/// Depth-aware variant: the drawn translation is shrunk so the camera moves at
/// most max_depth_fraction of the depth predicted toward the translation
/// direction (minimum over the surrounding pixels). Translating past the
/// depicted surface would put the virtual camera outside the scene, where the
/// re-predicted view no longer describes the same geometry.
Pose sample_perturb_pose(const PerturbConfig& cfg, const DepthMap& depth, Rng& rng);

/// Forward-splatted novel view. fill_dist is 0 where a source pixel splatted
/// directly, the ring distance (1..radius) where a hole was filled from the
/// nearest splat, and 255 where nothing was available (such pixels are
/// invalid in `depth` and black in `image`). src_index maps each rendered
/// pixel to the source pixel (v * width + u) that produced its content, -1
/// when invalid.
struct SynthView {
  Panorama image;
  DepthMap depth;
  std::vector<uint8_t> fill_dist;
  std::vector<int32_t> src_index;
};

/// Renders the scene depicted by (image, depth) from a camera displaced by
/// `pose` (expressed in the current camera frame). Source pixels are
/// reprojected and splatted to the nearest destination pixel with a z-buffer
/// on radial distance; ties keep the lowest source index. Remaining holes are
/// filled from the nearest splat within `fill_radius` rings (0 disables).
SynthView warp_panorama(const Panorama& image, const DepthMap& depth, const Pose& pose,
                        int fill_radius = 2);

}  // namespace pancal
