#pragma once

#include <array>
#include <vector>

#include "pancal/types.hpp"

namespace pancal {

/// Whole-image retrieval descriptor: an 8 x 16 cell grid of 4-bin gradient
/// orientation histograms (512 dimensions), L2 normalized. Normalization
/// makes it invariant to global intensity scaling.
struct GlobalDescriptor {
  static constexpr int kDim = 512;
  Eigen::Matrix<float, kDim, 1> v = Eigen::Matrix<float, kDim, 1>::Zero();

  double distance(const GlobalDescriptor& other) const {
    return (v - other.v).norm();
  }
};

/// Harris corner with a 256-bit binary intensity-comparison descriptor.
struct LocalFeature {
  float u = 0.0f, v = 0.0f;
  float response = 0.0f;
  std::array<uint64_t, 4> descriptor{};
};

int hamming_distance(const std::array<uint64_t, 4>& a, const std::array<uint64_t, 4>& b);

struct FeatureConfig {
  int max_features = 500;
  int row_margin = 16;           // detections keep v in [margin, height - margin)
  double min_response_ratio = 0.005;  // relative to the strongest response
};

struct ImageFeatures {
  GlobalDescriptor global;
  std::vector<LocalFeature> local;
};

/// Detects Harris corners (3x3 non-max suppression, horizontal wrap,
/// strongest first) and describes each with seeded pairwise intensity
/// comparisons in a smoothed 31 x 31 patch. Fully deterministic.
ImageFeatures extract_features(const Panorama& pano, const FeatureConfig& cfg = {});

/// Index pairs (a into `a`, b into `b`) of mutual nearest neighbors by
/// Hamming distance that also pass the ratio test (best < ratio * second).
std::vector<std::pair<int, int>> match_features(const std::vector<LocalFeature>& a,
                                                const std::vector<LocalFeature>& b,
                                                double ratio = 0.85);

}  // namespace pancal
