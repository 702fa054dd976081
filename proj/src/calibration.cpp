#include "pancal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pancal/stretch.hpp"

namespace pancal {

Panorama augment_panorama(const DepthPredictor& predictor, const Panorama& image,
                          const LossConfig& cfg, Rng& rng) {
  const DepthMap d_hat = predictor.predict(image);
  const double mean = d_hat.mean_valid();
  if (mean > cfg.delta2) {
    const double k = rng.uniform(cfg.sigma * cfg.sigma, cfg.sigma);
    return stretch_image(image, k);
  }
  if (mean < cfg.delta1) {
    const double k = rng.uniform(1.0 / cfg.sigma, 1.0 / (cfg.sigma * cfg.sigma));
    return stretch_image(image, k);
  }
  const Pose pose = sample_perturb_pose(cfg.perturb, d_hat, rng);
  return warp_panorama(image, d_hat, pose, cfg.fill_radius).image;
}

std::vector<Panorama> make_training_set(const DepthPredictor& predictor,
                                        const std::vector<Panorama>& images, int n_aug,
                                        const LossConfig& cfg, Rng& rng) {
  if (images.empty()) throw std::domain_error("training set needs at least one image");
  if (n_aug < 0) throw std::domain_error("n_aug must be >= 0");
  std::vector<Panorama> out;
  if (n_aug == 0) {
    out = images;
    return out;
  }
  out.reserve(images.size() * static_cast<size_t>(n_aug));
  for (size_t i = 0; i < images.size(); ++i) {
    for (int j = 0; j < n_aug; ++j) {
      Rng stream = rng.stream(hash_combine(i, static_cast<uint64_t>(j)));
      out.push_back(augment_panorama(predictor, images[i], cfg, stream));
    }
  }
  return out;
}

namespace {

std::vector<double> params_to_vec(const CorrectionParams& p) {
  std::vector<double> v;
  v.reserve(2 + p.band_bias.size());
  v.push_back(p.log_scale);
  v.push_back(p.gamma);
  v.insert(v.end(), p.band_bias.begin(), p.band_bias.end());
  return v;
}

CorrectionParams vec_to_params(const std::vector<double>& v, size_t n_bands) {
  CorrectionParams p;
  p.log_scale = v[0];
  p.gamma = v[1];
  p.band_bias.assign(v.begin() + 2, v.begin() + 2 + n_bands);
  return p;
}

void project_box(std::vector<double>& v, const CalibConfig& cfg) {
  v[0] = std::clamp(v[0], std::log(cfg.min_scale), std::log(cfg.max_scale));
  v[1] = std::clamp(v[1], cfg.min_gamma + 1e-6, cfg.max_gamma - 1e-6);
}

std::string trace_to_string(const std::vector<double>& trace) {
  std::ostringstream os;
  for (size_t i = 0; i < trace.size(); ++i) {
    if (i) os << " ";
    os << trace[i];
  }
  return os.str();
}

struct BatchObjective {
  CalibratedPredictor& predictor;
  const std::vector<Panorama>& train;
  const CalibConfig& cfg;
  const LossConfig& loss_cfg;
  size_t n_bands;

  double eval(const std::vector<double>& theta, int step, const std::vector<size_t>& batch) {
    const CorrectionParams saved = predictor.params();
    predictor.set_params(vec_to_params(theta, n_bands));
    double sum = 0.0;
    for (const size_t idx : batch) {
      // The (step, image) stream is shared by every finite-difference probe
      // in this step, so each probe sees the same poses and subsamples.
      Rng rng(hash_combine(hash_combine(cfg.seed, static_cast<uint64_t>(step)),
                           static_cast<uint64_t>(idx)));
      sum += total_loss(predictor, train[idx], loss_cfg, rng).total;
    }
    predictor.set_params(saved);
    return sum / static_cast<double>(batch.size());
  }
};

CalibResult descend(CalibratedPredictor& predictor, const std::vector<Panorama>& train,
                    const CalibConfig& cfg, const LossConfig& loss_cfg) {
  if (train.empty()) throw std::domain_error("calibration needs at least one image");
  if (cfg.steps < 0) throw std::domain_error("steps must be >= 0");
  if (cfg.batch < 1) throw std::domain_error("batch must be >= 1");
  if (!(cfg.lr > 0.0)) throw std::domain_error("learning rate must be positive");

  const size_t n_bands = predictor.params().band_bias.size();
  BatchObjective objective{predictor, train, cfg, loss_cfg, n_bands};
  std::vector<double> theta = params_to_vec(predictor.params());

  std::vector<size_t> active = {0};  // log_scale
  if (cfg.fit_gamma) active.push_back(1);
  if (cfg.fit_band_bias) {
    for (size_t i = 0; i < n_bands; ++i) active.push_back(2 + i);
  }

  CalibResult result;
  result.loss_trace.reserve(static_cast<size_t>(cfg.steps));

  const size_t batch_size = std::min<size_t>(static_cast<size_t>(cfg.batch), train.size());
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<size_t> batch(batch_size);
    for (size_t j = 0; j < batch_size; ++j) {
      batch[j] = (static_cast<size_t>(step) * batch_size + j) % train.size();
    }

    const double base = objective.eval(theta, step, batch);
    result.loss_trace.push_back(base);
    if (!std::isfinite(base)) {
      throw std::runtime_error("calibration diverged at step " + std::to_string(step) +
                               "; loss trace: " + trace_to_string(result.loss_trace));
    }

    std::vector<double> grad(active.size(), 0.0);
    for (size_t a = 0; a < active.size(); ++a) {
      const size_t i = active[a];
      const double h = cfg.fd_epsilon * (1.0 + std::abs(theta[i]));
      std::vector<double> plus = theta, minus = theta;
      plus[i] += h;
      minus[i] -= h;
      const double lp = objective.eval(plus, step, batch);
      const double lm = objective.eval(minus, step, batch);
      grad[a] = (lp - lm) / (2.0 * h);
      if (!std::isfinite(grad[a])) {
        throw std::runtime_error("calibration gradient diverged at step " +
                                 std::to_string(step) +
                                 "; loss trace: " + trace_to_string(result.loss_trace));
      }
    }

    for (size_t a = 0; a < active.size(); ++a) theta[active[a]] -= cfg.lr * grad[a];
    project_box(theta, cfg);
  }

  predictor.set_params(vec_to_params(theta, n_bands));
  result.params = predictor.params();
  return result;
}

}  // namespace

CalibResult calibrate_offline(CalibratedPredictor& predictor,
                              const std::vector<Panorama>& train, const CalibConfig& cfg,
                              const LossConfig& loss_cfg) {
  return descend(predictor, train, cfg, loss_cfg);
}

std::vector<OnlineStep> calibrate_online(CalibratedPredictor& predictor,
                                         const std::vector<Panorama>& stream,
                                         const CalibConfig& cfg, const LossConfig& loss_cfg) {
  std::vector<OnlineStep> out;
  out.reserve(stream.size());
  CalibConfig step_cfg = cfg;
  step_cfg.steps = 1;
  step_cfg.batch = 1;
  for (size_t i = 0; i < stream.size(); ++i) {
    OnlineStep s;
    s.prediction = predictor.predict(stream[i]);
    step_cfg.seed = hash_combine(cfg.seed, i);
    const CalibResult r =
        calibrate_offline(predictor, {stream[i]}, step_cfg, loss_cfg);
    s.params = r.params;
    s.loss = r.loss_trace.empty() ? 0.0 : r.loss_trace.front();
    out.push_back(std::move(s));
  }
  return out;
}

CalibResult calibrate_from_navigation(CalibratedPredictor& predictor,
                                      const std::vector<AgentLogEntry>& log, int n_fwd,
                                      const CalibConfig& cfg, const LossConfig& loss_cfg) {
  if (n_fwd < 1) throw std::domain_error("n_fwd must be >= 1");
  std::vector<Panorama> forwards;
  for (const auto& entry : log) {
    if (entry.action != AgentAction::Forward) continue;
    forwards.push_back(entry.view);
    if (static_cast<int>(forwards.size()) == n_fwd) break;
  }
  if (static_cast<int>(forwards.size()) < n_fwd) {
    throw std::runtime_error("navigation log has " + std::to_string(forwards.size()) +
                             " forward frames, need " + std::to_string(n_fwd));
  }
  Rng rng(hash_combine(cfg.seed, 0x6e617667ULL));
  const std::vector<Panorama> train =
      make_training_set(predictor, forwards, cfg.n_aug, loss_cfg, rng);
  CalibConfig capped = cfg;
  capped.steps = std::min(cfg.steps, 300);
  return calibrate_offline(predictor, train, capped, loss_cfg);
}

}  // namespace pancal
