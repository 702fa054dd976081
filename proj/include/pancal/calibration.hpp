#pragma once

#include <vector>

#include "pancal/losses.hpp"
#include "pancal/predictor.hpp"

namespace pancal {

struct CalibConfig {
  int steps = 60;
  double lr = 0.05;
  double fd_epsilon = 1e-3;  // relative central-difference step
  int batch = 4;
  int n_aug = 10;            // augmentations per input image
  uint64_t seed = 0;

  // The base protocol descends the scalar log-scale. The extra correction
  // degrees of freedom are opt-in: over the depth range of a single scene
  // they are nearly collinear with the scale, so fitting them by default
  // smears a pure scale error across parameters.
  bool fit_gamma = false;
  bool fit_band_bias = false;

  // Box constraints projected after every update.
  double min_scale = 0.1, max_scale = 10.0;  // bounds on exp(log_scale)
  double min_gamma = 0.25, max_gamma = 4.0;
};

struct CalibResult {
  CorrectionParams params;
  std::vector<double> loss_trace;  // batch objective before each step
};

/// One training-set augmentation of `image`, driven by the predicted mean
/// depth: in-band scenes get a random novel view at a perturbation pose,
/// out-of-band scenes get a panorama stretch drawn toward the band.
Panorama augment_panorama(const DepthPredictor& predictor, const Panorama& image,
                          const LossConfig& cfg, Rng& rng);

/// n_aug augmentations per image (image-major order). n_aug = 0 copies the
/// originals.
std::vector<Panorama> make_training_set(const DepthPredictor& predictor,
                                        const std::vector<Panorama>& images, int n_aug,
                                        const LossConfig& cfg, Rng& rng);

/// Projected gradient descent on the correction parameters using central
/// finite differences of the self-consistency objective. Batches cycle
/// round-robin through the training set; every function evaluation within one
/// (step, image) pair reuses the same derived random stream so the losses are
/// smooth in the parameters. Throws on divergence (non-finite loss), with the
/// trace so far in the message.
CalibResult calibrate_offline(CalibratedPredictor& predictor,
                              const std::vector<Panorama>& train, const CalibConfig& cfg,
                              const LossConfig& loss_cfg);

struct OnlineStep {
  DepthMap prediction;       // emitted before the update, with current params
  CorrectionParams params;   // parameters after the update
  double loss = 0.0;
};

/// Streaming variant: for each frame, emit the prediction under the current
/// parameters, then take one descent step on that frame.
std::vector<OnlineStep> calibrate_online(CalibratedPredictor& predictor,
                                         const std::vector<Panorama>& stream,
                                         const CalibConfig& cfg, const LossConfig& loss_cfg);

enum class AgentAction { Forward, TurnLeft, TurnRight };

/// One executed agent step and the view observed after it.
struct AgentLogEntry {
  AgentAction action = AgentAction::Forward;
  Panorama view;
};

/// Map-free localization protocol: collect the views after the first n_fwd
/// forward motions, build n_fwd * n_aug augmentations, and calibrate offline
/// with the step count capped at 300. Throws when the log contains fewer than
/// n_fwd forward frames, naming the shortfall.
CalibResult calibrate_from_navigation(CalibratedPredictor& predictor,
                                      const std::vector<AgentLogEntry>& log, int n_fwd,
                                      const CalibConfig& cfg, const LossConfig& loss_cfg);

}  // namespace pancal
