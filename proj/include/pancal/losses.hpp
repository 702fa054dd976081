#pragma once

#include <array>
#include <vector>

#include "pancal/predictor.hpp"
#include "pancal/view_synthesis.hpp"

namespace pancal {

struct LossConfig {
  // Mean-depth comfort band and stretch base factor.
  double delta1 = 1.0;
  double delta2 = 2.5;
  double sigma = 0.8;

  int chamfer_samples = 8192;   // source points sampled for chamfer / normal
  int normal_neighbors = 15;    // neighborhood size for normal estimation
  int fill_radius = 2;          // hole fill radius for synthesized views
  bool include_filled = false;  // use hole-filled pixels of the warped view

  double weight_stretch = 1.0;
  double weight_chamfer = 1.0;
  double weight_normal = 1.0;

  PerturbConfig perturb;
};

/// Which branch the stretch loss took and the factors it used.
struct StretchDetail {
  int branch = 0;  // -1 shrink factors (mean > delta2), +1 grow, 0 inactive
  std::array<double, 2> factors{1.0, 1.0};
  std::array<double, 2> terms{0.0, 0.0};
};

/// Scale self-consistency: when the predicted mean depth leaves [delta1,
/// delta2], re-predict under two panorama stretches chosen to pull the scene
/// toward the band and penalize the squared disagreement between the
/// unstretched re-predictions and the original prediction.
double stretch_loss(const DepthPredictor& predictor, const Panorama& image,
                    const LossConfig& cfg, StretchDetail* detail = nullptr);

/// One matched source/target pair of the geometric losses, in the synthesized
/// view's camera frame.
struct MatchedPair {
  Eigen::Vector3d source;       // perturbed-frame position of the source point
  Eigen::Vector3d target;       // its nearest neighbor in the warped cloud
  Eigen::Vector3d normal;       // source normal rotated into the new frame
  bool normal_ok = false;
};

struct GeometryLosses {
  double chamfer = 0.0;
  double normal = 0.0;
  size_t n_pairs = 0;
  size_t n_normals = 0;
  std::vector<MatchedPair> pairs;  // populated when keep_pairs
};

/// Pose self-consistency terms. `d_hat` is the prediction on the original
/// image, `view` the synthesized view rendered with `d_hat` at `pose`, and
/// `d_warp` the prediction on view.image. Source points (subsampled with
/// `rng`) are mapped into the new frame and matched against the warped-view
/// cloud; chamfer is the mean squared distance, normal the mean squared
/// point-to-plane distance over pairs with well-defined normals.
GeometryLosses chamfer_normal_losses(const DepthMap& d_hat, const SynthView& view,
                                     const DepthMap& d_warp, const Pose& pose,
                                     const LossConfig& cfg, Rng& rng, bool keep_pairs = false);

double chamfer_loss(const DepthMap& d_hat, const SynthView& view, const DepthMap& d_warp,
                    const Pose& pose, const LossConfig& cfg, Rng& rng);
double normal_loss(const DepthMap& d_hat, const SynthView& view, const DepthMap& d_warp,
                   const Pose& pose, const LossConfig& cfg, Rng& rng);

/// kNN-plane normals for every point, oriented toward the camera (origin).
/// normal_valid is 0 where the neighborhood is rank-deficient.
void estimate_normals(PointCloud& cloud, int k);

struct LossReport {
  double stretch = 0.0;
  double chamfer = 0.0;
  double normal = 0.0;
  double total = 0.0;
  Pose perturb_pose;
};

/// Full self-consistency objective: stretch + chamfer + normal (each term
/// scaled by its weight; total is their sum). Draws the perturbation pose and
/// the chamfer subsample from `rng`.
LossReport total_loss(const DepthPredictor& predictor, const Panorama& image,
                      const LossConfig& cfg, Rng& rng);

/// Reference self-supervision objectives.
enum class BaselineLoss { Flip, Mask, Photometric, PseudoLabel };

double baseline_loss(BaselineLoss kind, const DepthPredictor& predictor, const Panorama& image,
                     const LossConfig& cfg, Rng& rng);

std::string baseline_name(BaselineLoss kind);
BaselineLoss baseline_from_name(const std::string& name);

}  // namespace pancal
