#include "pancal/losses.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

#include "pancal/geometry.hpp"
#include "pancal/kdtree.hpp"
#include "pancal/stretch.hpp"

namespace pancal {

namespace {

/// Mean of squared per-pixel differences over mutually valid pixels.
double masked_mse(const DepthMap& a, const DepthMap& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::domain_error("depth maps have different dimensions");
  }
  double sum = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < a.depth.size(); ++i) {
    if (!a.valid[i] || !b.valid[i]) continue;
    const double d = static_cast<double>(a.depth[i]) - static_cast<double>(b.depth[i]);
    sum += d * d;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

double stretch_loss(const DepthPredictor& predictor, const Panorama& image,
                    const LossConfig& cfg, StretchDetail* detail) {
  if (!(cfg.sigma > 0.0 && cfg.sigma < 1.0)) {
    throw std::domain_error("sigma must lie in (0, 1)");
  }
  if (!(cfg.delta1 < cfg.delta2)) throw std::domain_error("need delta1 < delta2");

  const DepthMap d_hat = predictor.predict(image);
  const double mean = d_hat.mean_valid();

  StretchDetail local;
  if (mean > cfg.delta2) {
    local.branch = -1;  // scene reads too large: shrink toward the band
    local.factors = {cfg.sigma, cfg.sigma * cfg.sigma};
  } else if (mean < cfg.delta1) {
    local.branch = 1;  // too small: grow toward the band
    local.factors = {1.0 / cfg.sigma, 1.0 / (cfg.sigma * cfg.sigma)};
  } else {
    if (detail) *detail = local;
    return 0.0;
  }

  double loss = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double k = local.factors[i];
    const Panorama stretched = stretch_image(image, k);
    const DepthMap d_k = predictor.predict(stretched);
    const DepthMap unstretched = stretch_depth(d_k, 1.0 / k);
    local.terms[i] = masked_mse(d_hat, unstretched);
    loss += local.terms[i];
  }
  if (detail) *detail = local;
  return loss;
}

namespace {

struct NormalAt {
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  bool ok = false;
};

NormalAt plane_normal(const std::vector<Eigen::Vector3d>& points,
                      const std::vector<KdTree3::Hit>& hits, const Eigen::Vector3d& at) {
  NormalAt result;
  if (hits.size() < 3) return result;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& h : hits) mean += points[h.index];
  mean /= static_cast<double>(hits.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& h : hits) {
    const Eigen::Vector3d d = points[h.index] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
  // Rank < 2 (collinear or coincident neighborhood) leaves the plane, and
  // hence its normal, undefined.
  if (evals[1] <= std::max(evals[2], 1e-300) * 1e-8) return result;
  result.n = eig.eigenvectors().col(0);
  if (result.n.dot(-at) < 0.0) result.n = -result.n;
  result.ok = true;
  return result;
}

std::vector<size_t> subsample_indices(size_t total, size_t want, Rng& rng) {
  std::vector<size_t> idx(total);
  for (size_t i = 0; i < total; ++i) idx[i] = i;
  if (want >= total) return idx;
  for (size_t i = 0; i < want; ++i) {
    const size_t j = i + rng.uniform_index(total - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(want);
  return idx;
}

}  // namespace

GeometryLosses chamfer_normal_losses(const DepthMap& d_hat, const SynthView& view,
                                     const DepthMap& d_warp, const Pose& pose,
                                     const LossConfig& cfg, Rng& rng, bool keep_pairs) {
  if (d_warp.width != d_hat.width || d_warp.height != d_hat.height) {
    throw std::domain_error("warped prediction dimensions differ from the source");
  }

  // Target cloud: the prediction on the synthesized view, restricted to
  // directly splatted pixels unless hole-filled ones are explicitly allowed.
  DepthMap target_depth = d_warp;
  for (size_t i = 0; i < target_depth.valid.size(); ++i) {
    const uint8_t f = view.fill_dist[i];
    const bool usable = cfg.include_filled ? f != 255 : f == 0;
    if (!usable) target_depth.valid[i] = 0;
  }
  const PointCloud target = backproject(target_depth);
  if (target.points.empty()) {
    throw std::runtime_error("synthesized view left no usable pixels for matching");
  }
  const KdTree3 target_tree(target.points);

  const PointCloud source = backproject(d_hat);
  if (source.points.empty()) throw std::runtime_error("prediction has no valid pixels");
  const KdTree3 source_tree(source.points);

  const std::vector<size_t> sample = subsample_indices(
      source.points.size(), static_cast<size_t>(std::max(cfg.chamfer_samples, 1)), rng);

  GeometryLosses out;
  if (keep_pairs) out.pairs.reserve(sample.size());
  double chamfer_sum = 0.0, normal_sum = 0.0;
  for (const size_t si : sample) {
    const Eigen::Vector3d& x = source.points[si];
    const auto hits = source_tree.knn(x, static_cast<size_t>(cfg.normal_neighbors));
    const NormalAt nrm = plane_normal(source.points, hits, x);

    const Eigen::Vector3d xp = pose.to_local(x);
    const auto nn = target_tree.nearest(xp);
    const Eigen::Vector3d& y = target.points[nn.index];
    const Eigen::Vector3d diff = xp - y;
    chamfer_sum += diff.squaredNorm();
    ++out.n_pairs;

    MatchedPair pair;
    pair.source = xp;
    pair.target = y;
    if (nrm.ok) {
      pair.normal = pose.rotation.transpose() * nrm.n;
      pair.normal_ok = true;
      const double along = pair.normal.dot(diff);
      normal_sum += along * along;
      ++out.n_normals;
    }
    if (keep_pairs) out.pairs.push_back(pair);
  }

  out.chamfer = out.n_pairs ? chamfer_sum / static_cast<double>(out.n_pairs) : 0.0;
  out.normal = out.n_normals ? normal_sum / static_cast<double>(out.n_normals) : 0.0;
  return out;
}

double chamfer_loss(const DepthMap& d_hat, const SynthView& view, const DepthMap& d_warp,
                    const Pose& pose, const LossConfig& cfg, Rng& rng) {
  return chamfer_normal_losses(d_hat, view, d_warp, pose, cfg, rng).chamfer;
}

double normal_loss(const DepthMap& d_hat, const SynthView& view, const DepthMap& d_warp,
                   const Pose& pose, const LossConfig& cfg, Rng& rng) {
  return chamfer_normal_losses(d_hat, view, d_warp, pose, cfg, rng).normal;
}

void estimate_normals(PointCloud& cloud, int k) {
  if (cloud.points.empty()) throw std::domain_error("cannot estimate normals of an empty cloud");
  if (k < 3) throw std::domain_error("normal estimation needs k >= 3");
  const KdTree3 tree(cloud.points);
  cloud.normals.assign(cloud.points.size(), Eigen::Vector3d::Zero());
  cloud.normal_valid.assign(cloud.points.size(), 0);
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const auto hits = tree.knn(cloud.points[i], static_cast<size_t>(k));
    const NormalAt nrm = plane_normal(cloud.points, hits, cloud.points[i]);
    if (nrm.ok) {
      cloud.normals[i] = nrm.n;
      cloud.normal_valid[i] = 1;
    }
  }
}

LossReport total_loss(const DepthPredictor& predictor, const Panorama& image,
                      const LossConfig& cfg, Rng& rng) {
  LossReport report;
  report.stretch = cfg.weight_stretch * stretch_loss(predictor, image, cfg);

  const DepthMap d_hat = predictor.predict(image);
  report.perturb_pose = sample_perturb_pose(cfg.perturb, d_hat, rng);
  const SynthView view = warp_panorama(image, d_hat, report.perturb_pose, cfg.fill_radius);
  const DepthMap d_warp = predictor.predict(view.image);

  const GeometryLosses geom =
      chamfer_normal_losses(d_hat, view, d_warp, report.perturb_pose, cfg, rng);
  report.chamfer = cfg.weight_chamfer * geom.chamfer;
  report.normal = cfg.weight_normal * geom.normal;
  report.total = report.stretch + report.chamfer + report.normal;
  return report;
}

namespace {

double flip_baseline(const DepthPredictor& predictor, const Panorama& image) {
  const DepthMap d = predictor.predict(image);
  const DepthMap d_flip = predictor.predict(flip_horizontal(image));
  return masked_mse(d, flip_horizontal(d_flip));
}

double mask_baseline(const DepthPredictor& predictor, const Panorama& image,
                     Rng& rng) {
  constexpr int kRows = 4, kCols = 8;
  constexpr double kDropFraction = 0.1;
  const int n_patches = kRows * kCols;
  const int n_drop = static_cast<int>(std::lround(kDropFraction * n_patches));

  std::vector<int> order(n_patches);
  for (int i = 0; i < n_patches; ++i) order[i] = i;
  for (int i = 0; i < n_drop; ++i) {
    const size_t j = i + rng.uniform_index(static_cast<uint64_t>(n_patches - i));
    std::swap(order[i], order[j]);
  }
  std::vector<uint8_t> dropped(n_patches, 0);
  for (int i = 0; i < n_drop; ++i) dropped[order[i]] = 1;

  Panorama masked = image;
  const int ph = image.height / kRows, pw = image.width / kCols;
  auto patch_of = [&](int u, int v) {
    const int pr = std::min(v / ph, kRows - 1);
    const int pc = std::min(u / pw, kCols - 1);
    return pr * kCols + pc;
  };
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      if (dropped[patch_of(u, v)]) {
        float* px = masked.px(u, v);
        px[0] = px[1] = px[2] = 0.0f;
      }
    }
  }

  const DepthMap d_full = predictor.predict(image);
  const DepthMap d_masked = predictor.predict(masked);
  // Scored on the masked region: the dropped patches are where the model has
  // to reconstruct depth from context, so that is where consistency with the
  // unmasked prediction is measured.
  double sum = 0.0;
  size_t n = 0;
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      const size_t idx = static_cast<size_t>(v) * image.width + u;
      if (!dropped[patch_of(u, v)] || !d_full.valid[idx] || !d_masked.valid[idx]) continue;
      const double diff =
          static_cast<double>(d_full.depth[idx]) - static_cast<double>(d_masked.depth[idx]);
      sum += diff * diff;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double photometric_baseline(const DepthPredictor& predictor, const Panorama& image,
                            const LossConfig& cfg, Rng& rng) {
  const DepthMap d_hat = predictor.predict(image);
  const Pose pose = sample_perturb_pose(cfg.perturb, d_hat, rng);
  const SynthView fwd = warp_panorama(image, d_hat, pose, cfg.fill_radius);
  const DepthMap d_warp = predictor.predict(fwd.image);
  const SynthView back = warp_panorama(fwd.image, d_warp, pose.inverse(), cfg.fill_radius);

  double sum = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < image.pixel_count(); ++i) {
    if (back.fill_dist[i] != 0) continue;
    for (int c = 0; c < 3; ++c) {
      const double diff = static_cast<double>(image.rgb[i * 3 + c]) -
                          static_cast<double>(back.image.rgb[i * 3 + c]);
      sum += diff * diff;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double pseudo_label_baseline(const DepthPredictor& predictor, const Panorama& image) {
  constexpr int kK = 4;
  const DepthMap d_hat = predictor.predict(image);

  DepthMap mean = DepthMap::create(d_hat.width, d_hat.height);
  std::vector<int> counts(mean.pixel_count(), 0);
  std::vector<double> acc(mean.pixel_count(), 0.0);
  for (int k = 1; k <= kK; ++k) {
    const double theta = kTwoPi * k / kK;
    const DepthMap dk = rotate_yaw(predictor.predict(rotate_yaw(image, theta)), -theta);
    for (size_t i = 0; i < acc.size(); ++i) {
      if (!dk.valid[i]) continue;
      acc[i] += static_cast<double>(dk.depth[i]);
      counts[i] += 1;
    }
  }
  for (size_t i = 0; i < acc.size(); ++i) {
    if (counts[i] == 0) {
      mean.valid[i] = 0;
    } else {
      mean.depth[i] = static_cast<float>(acc[i] / counts[i]);
    }
  }
  return masked_mse(d_hat, mean);
}

}  // namespace

double baseline_loss(BaselineLoss kind, const DepthPredictor& predictor, const Panorama& image,
                     const LossConfig& cfg, Rng& rng) {
  switch (kind) {
    case BaselineLoss::Flip:
      return flip_baseline(predictor, image);
    case BaselineLoss::Mask:
      return mask_baseline(predictor, image, rng);
    case BaselineLoss::Photometric:
      return photometric_baseline(predictor, image, cfg, rng);
    case BaselineLoss::PseudoLabel:
      return pseudo_label_baseline(predictor, image);
  }
  throw std::domain_error("unknown baseline loss");
}

std::string baseline_name(BaselineLoss kind) {
  switch (kind) {
    case BaselineLoss::Flip:
      return "flip";
    case BaselineLoss::Mask:
      return "mask";
    case BaselineLoss::Photometric:
      return "photometric";
    case BaselineLoss::PseudoLabel:
      return "pseudo_label";
  }
  throw std::domain_error("unknown baseline loss");
}

BaselineLoss baseline_from_name(const std::string& name) {
  for (BaselineLoss k : {BaselineLoss::Flip, BaselineLoss::Mask, BaselineLoss::Photometric,
                         BaselineLoss::PseudoLabel}) {
    if (baseline_name(k) == name) return k;
  }
  throw std::domain_error("unknown baseline loss: " + name);
}

}  // namespace pancal
