#pragma once

#include <array>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "pancal/scenegen.hpp"
#include "pancal/types.hpp"

namespace pancal {

/// Lightweight correction head applied on top of a frozen base predictor:
///   d = exp(log_scale) * base^gamma + band_bias[band(row)]
/// with one additive bias per equal-colatitude row band. Output is floored at
/// 1e-3 m so downstream log metrics and backprojection stay defined.
struct CorrectionParams {
  double log_scale = 0.0;
  double gamma = 1.0;
  std::vector<double> band_bias = std::vector<double>(4, 0.0);

  bool operator==(const CorrectionParams&) const = default;
};

constexpr float kMinDepth = 1e-3f;

int band_of_row(int v, int height, int n_bands);
DepthMap apply_correction(const DepthMap& base, const CorrectionParams& params);

nlohmann::json correction_to_json(const CorrectionParams& params);
CorrectionParams correction_from_json(const nlohmann::json& j);

class DepthPredictor {
 public:
  virtual ~DepthPredictor() = default;
  virtual DepthMap predict(const Panorama& image) const = 0;
};

/// Adapter for ad-hoc predictors (tests, synthetic fields).
class CallablePredictor final : public DepthPredictor {
 public:
  explicit CallablePredictor(std::function<DepthMap(const Panorama&)> fn) : fn_(std::move(fn)) {}
  DepthMap predict(const Panorama& image) const override { return fn_(image); }

 private:
  std::function<DepthMap(const Panorama&)> fn_;
};

/// Systematic error model for the scene-backed mock predictor, applied to the
/// exact ray-cast depth g at colatitude psi:
///   d = scale' * g^gamma' + latitude_bias' * cos(psi) + noise_std * N(0,1)
/// When `comfort_band` = [lo, hi] is set, the systematic terms attenuate to
/// identity for images whose depicted mean depth lies inside the band and
/// ramp linearly to full strength `band_ramp` meters outside it, mimicking a
/// learned model that is reliable in its training domain and biased outside.
/// Noise is deterministic per rendered pose.
struct CorruptionSpec {
  double scale = 1.0;
  double gamma = 1.0;
  double latitude_bias = 0.0;
  double noise_std = 0.0;
  std::optional<std::array<double, 2>> comfort_band;
  double band_ramp = 0.5;
  uint64_t noise_seed = 0;

  bool is_identity() const {
    return scale == 1.0 && gamma == 1.0 && latitude_bias == 0.0 && noise_std == 0.0;
  }

  /// Parses "scale=1.3,gamma=1.1,bias=0.2,noise=0.05,band=1:2.5". Unknown
  /// keys throw. "gt" or an empty string is the identity.
  static CorruptionSpec parse(const std::string& text);
  std::string to_string() const;
};

/// Mock depth network: answers any image that carries render provenance for
/// its scene by ray casting the exact ground truth and applying the
/// corruption model. Ground-truth casts are memoized per provenance tag.
class ScenePredictor final : public DepthPredictor {
 public:
  explicit ScenePredictor(std::shared_ptr<const Scene> scene, CorruptionSpec spec = {});

  DepthMap predict(const Panorama& image) const override;

  /// Exact ground truth for a tagged image, bypassing the corruption model.
  DepthMap ground_truth(const Panorama& image) const;

  const CorruptionSpec& corruption() const { return spec_; }

 private:
  const DepthMap& cast_depth(const RenderTag& tag, int width, int height) const;

  std::shared_ptr<const Scene> scene_;
  CorruptionSpec spec_;
  mutable std::unordered_map<uint64_t, DepthMap> cache_;
  mutable std::deque<uint64_t> cache_order_;
};

/// Base predictor plus a trainable correction head.
class CalibratedPredictor final : public DepthPredictor {
 public:
  explicit CalibratedPredictor(std::shared_ptr<const DepthPredictor> base,
                               CorrectionParams params = {});

  DepthMap predict(const Panorama& image) const override;

  const CorrectionParams& params() const { return params_; }
  void set_params(CorrectionParams params);
  const DepthPredictor& base() const { return *base_; }

 private:
  std::shared_ptr<const DepthPredictor> base_;
  CorrectionParams params_;
};

/// Depth predictor running as a child process: each request writes one framed
/// PNG to the child's stdin ([u64 le length][bytes]) and reads one framed
/// depth payload (same depth format as .pdr files) from its stdout.
class SubprocessPredictor final : public DepthPredictor {
 public:
  explicit SubprocessPredictor(const std::string& command);
  ~SubprocessPredictor() override;

  SubprocessPredictor(const SubprocessPredictor&) = delete;
  SubprocessPredictor& operator=(const SubprocessPredictor&) = delete;

  DepthMap predict(const Panorama& image) const override;

 private:
  int child_pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

}  // namespace pancal
