#pragma once

#include <string>
#include <vector>

#include "pancal/rng.hpp"
#include "pancal/types.hpp"

namespace pancal {

/// Appearance and viewpoint perturbations used to probe predictor robustness.
/// All photometric outputs are clamped to [0, 1]. Photometric shifts keep the
/// image's provenance; `Rotation` resamples through a random camera rotation
/// (yaw uniform in [-pi, pi), pitch and roll uniform in [-pi/8, pi/8]) and
/// composes it into the provenance.
enum class ImageShift {
  LowLight,      // * 0.75
  WhiteBalance,  // channel gains (0.7, 0.9, 0.8)
  Gamma,         // I^1.5
  Speckle,       // I + I * N(0, var 0.06)
  Gaussian,      // I + N(0, var 0.005)
  SaltPepper,    // 0.5% of pixels, half white, half black
  Rotation,
};

Panorama apply_shift(const Panorama& pano, ImageShift shift, Rng& rng);

const std::vector<ImageShift>& all_shifts();
std::string shift_name(ImageShift shift);
ImageShift shift_from_name(const std::string& name);

}  // namespace pancal
