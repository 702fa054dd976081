#pragma once

#include <optional>
#include <vector>

#include "pancal/features.hpp"
#include "pancal/predictor.hpp"
#include "pancal/view_synthesis.hpp"

namespace pancal {

/// One synthesized reference view: its pose (in the reference camera frame),
/// retrieval descriptor, and local features lifted to 3D reference-frame
/// points via the splat provenance.
struct ReferenceView {
  Pose pose;
  GlobalDescriptor global;
  std::vector<LocalFeature> features;
  std::vector<Eigen::Vector3d> points;  // parallel to features
};

struct ReferenceMap {
  std::vector<ReferenceView> views;
  Eigen::AlignedBox3d bbox;  // of the reference point cloud
};

struct LocalizeConfig {
  int n_translations = 100;
  int n_rotations = 8;
  double bbox_shrink = 0.1;    // fraction of each half-extent removed
  int retrieval_top_k = 5;
  int min_matches = 4;
  int ransac_iterations = 500;
  double ransac_threshold_deg = 1.0;
  int min_inliers = 6;
  int refine_iterations = 10;
  FeatureConfig features;
};

/// n_translations * n_rotations camera poses: translations uniform in the
/// bbox shrunk by `shrink` per half-extent, yaw angles exactly 2*pi*j/n_r.
std::vector<Pose> sample_reference_poses(const Eigen::AlignedBox3d& bbox, int n_translations,
                                         int n_rotations, double shrink, Rng& rng);

/// Builds the view database for map-free localization from one reference
/// panorama: predicts its depth, synthesizes every sampled pose, extracts
/// features, and keeps those that land on directly splatted pixels (so each
/// has an exact 3D point in the reference frame).
ReferenceMap build_reference_map(const Panorama& reference, const DepthPredictor& predictor,
                                 const LocalizeConfig& cfg, Rng& rng);

enum class LocalizeStatus {
  Ok,
  NoMatches,      // retrieval or matching produced too few correspondences
  Degenerate,     // no RANSAC hypothesis could be solved
  TooFewInliers,  // a pose was found but with unreliable support
};

std::string localize_status_name(LocalizeStatus status);

struct LocalizeResult {
  LocalizeStatus status = LocalizeStatus::NoMatches;
  Pose pose;          // query camera in the reference frame (valid when Ok)
  int best_view = -1;
  int n_matches = 0;
  int n_inliers = 0;
};

/// Localizes a query panorama against the reference map: retrieve top-k views
/// by global descriptor, match binary features (mutual NN + ratio test),
/// solve P3P hypotheses under RANSAC with an angular inlier test, and refine
/// the best pose with Gauss-Newton on bearing residuals.
LocalizeResult localize_query(const Panorama& query, const ReferenceMap& map,
                              const LocalizeConfig& cfg, Rng& rng);

/// Minimal camera pose solvers used by localization; exposed for testing.
/// Solutions map camera-frame points to world: X_w = R * (s * f) + t.
std::vector<Pose> solve_p3p(const std::array<Eigen::Vector3d, 3>& bearings,
                            const std::array<Eigen::Vector3d, 3>& points);

/// (translation error in meters, rotation error in degrees).
std::pair<double, double> pose_error(const Pose& estimate, const Pose& truth);

}  // namespace pancal
