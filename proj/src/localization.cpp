#include "pancal/localization.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "pancal/geometry.hpp"

namespace pancal {
namespace {

// Polynomial helpers on coefficient vectors, index = power.
std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

void poly_add(std::vector<double>& a, const std::vector<double>& b) {
  if (b.size() > a.size()) a.resize(b.size(), 0.0);
  for (size_t i = 0; i < b.size(); ++i) a[i] += b[i];
}

double poly_eval(const std::vector<double>& p, double x) {
  double acc = 0.0;
  for (size_t i = p.size(); i-- > 0;) acc = acc * x + p[i];
  return acc;
}

// Real roots via the companion matrix of the normalized polynomial.
std::vector<double> real_roots(std::vector<double> coeff) {
  while (coeff.size() > 1 && std::abs(coeff.back()) < 1e-14) coeff.pop_back();
  const int deg = static_cast<int>(coeff.size()) - 1;
  std::vector<double> roots;
  if (deg < 1) return roots;
  if (deg == 1) {
    roots.push_back(-coeff[0] / coeff[1]);
    return roots;
  }
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 0; i < deg; ++i) companion(i, deg - 1) = -coeff[i] / coeff[deg];
  for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  for (int i = 0; i < deg; ++i) {
    const std::complex<double> z = solver.eigenvalues()(i);
    if (std::abs(z.imag()) <= 1e-8 * (1.0 + std::abs(z.real()))) roots.push_back(z.real());
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Rigid transform taking camera-frame points onto world points (Kabsch).
Pose absolute_orientation(const std::array<Eigen::Vector3d, 3>& cam,
                          const std::array<Eigen::Vector3d, 3>& world) {
  Eigen::Vector3d cc = (cam[0] + cam[1] + cam[2]) / 3.0;
  Eigen::Vector3d cw = (world[0] + world[1] + world[2]) / 3.0;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) h += (cam[i] - cc) * (world[i] - cw).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  Pose pose;
  pose.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  pose.translation = cw - pose.rotation * cc;
  return pose;
}

struct Correspondence {
  Eigen::Vector3d bearing;  // unit, query camera frame
  Eigen::Vector3d point;    // reference frame
};

double angular_residual(const Pose& pose, const Correspondence& c) {
  const Eigen::Vector3d d = pose.to_local(c.point);
  const double n = d.norm();
  if (n < 1e-12) return kPi;
  const Eigen::Vector3d dhat = d / n;
  const double cosang = std::clamp(dhat.dot(c.bearing), -1.0, 1.0);
  return std::acos(cosang);
}

int count_inliers(const Pose& pose, const std::vector<Correspondence>& corrs, double thresh,
                  double* total = nullptr) {
  int n = 0;
  double sum = 0.0;
  for (const Correspondence& c : corrs) {
    const double r = angular_residual(pose, c);
    if (r <= thresh) {
      ++n;
      sum += r;
    }
  }
  if (total) *total = sum;
  return n;
}

// Gauss-Newton on unit-bearing residuals, parameterized by a right rotation
// increment and a world-frame translation increment.
Pose refine_pose(Pose pose, const std::vector<Correspondence>& corrs,
                 const std::vector<int>& subset, int iterations) {
  for (int iter = 0; iter < iterations; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    int used = 0;
    for (int idx : subset) {
      const Correspondence& c = corrs[static_cast<size_t>(idx)];
      const Eigen::Vector3d d = pose.to_local(c.point);
      const double n = d.norm();
      if (n < 1e-9) continue;
      const Eigen::Vector3d dhat = d / n;
      const Eigen::Vector3d r = dhat - c.bearing;
      const Eigen::Matrix3d jdir = (Eigen::Matrix3d::Identity() - dhat * dhat.transpose()) / n;
      Eigen::Matrix<double, 3, 6> j;
      j.block<3, 3>(0, 0) = jdir * skew(d);
      j.block<3, 3>(0, 3) = -jdir * pose.rotation.transpose();
      h += j.transpose() * j;
      g += j.transpose() * r;
      ++used;
    }
    if (used < 3) break;
    h.diagonal().array() += 1e-9;
    const Eigen::Matrix<double, 6, 1> delta = -h.ldlt().solve(g);
    if (!delta.allFinite()) break;
    const Eigen::Vector3d omega = delta.head<3>();
    const double angle = omega.norm();
    if (angle > 1e-15) {
      pose.rotation = pose.rotation * Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
    }
    pose.translation += delta.tail<3>();
    pose.rotation = Eigen::Quaterniond(pose.rotation).normalized().toRotationMatrix();
    if (delta.norm() < 1e-12) break;
  }
  return pose;
}

}  // namespace

std::vector<Pose> solve_p3p(const std::array<Eigen::Vector3d, 3>& bearings,
                            const std::array<Eigen::Vector3d, 3>& points) {
  std::vector<Pose> solutions;
  const double a = (points[1] - points[2]).norm();
  const double b = (points[0] - points[2]).norm();
  const double c = (points[0] - points[1]).norm();
  if (a < 1e-9 || b < 1e-9 || c < 1e-9) return solutions;

  const double p = 2.0 * bearings[1].dot(bearings[2]);
  const double q = 2.0 * bearings[0].dot(bearings[2]);
  const double r = 2.0 * bearings[0].dot(bearings[1]);
  const double aa = (a * a) / (b * b);
  const double bb = (c * c) / (b * b);

  // The two distance-ratio constraints are monic quadratics in u = s2/s1
  // with coefficients polynomial in v = s3/s1; their resultant is a quartic
  // in v:  (c1-c2)^2 - b2 (c1-c2)(b1-b2) + c2 (b1-b2)^2 = 0.
  const std::vector<double> d12 = {-(1.0 + aa - bb), q * (aa - bb), 1.0 - aa + bb};
  const std::vector<double> db = {r, -p};  // b1 - b2
  const std::vector<double> c2 = {1.0 - bb, bb * q, -bb};
  std::vector<double> quartic = poly_mul(d12, d12);
  {
    std::vector<double> cross = poly_mul(d12, db);
    for (double& x : cross) x *= r;  // -b2 = r
    poly_add(quartic, cross);
    poly_add(quartic, poly_mul(c2, poly_mul(db, db)));
  }

  for (double v : real_roots(quartic)) {
    if (!(v > 1e-9)) continue;
    const double denom = poly_eval(db, v);
    std::vector<double> us;
    if (std::abs(denom) > 1e-9) {
      us.push_back(-poly_eval(d12, v) / denom);
    } else {
      // Fall back to the second quadratic directly.
      const double disc = r * r - 4.0 * poly_eval(c2, v) * -1.0;  // u^2 - r u + (1 - bb(...))
      const double cc2 = 1.0 + bb * (v * q - v * v - 1.0);
      const double d2 = r * r - 4.0 * cc2;
      (void)disc;
      if (d2 < 0) continue;
      us.push_back(0.5 * (r + std::sqrt(d2)));
      us.push_back(0.5 * (r - std::sqrt(d2)));
    }
    for (double u : us) {
      if (!(u > 1e-9)) continue;
      const double res1 = u * u + v * v - u * v * p - aa * (1.0 + v * v - q * v);
      const double res2 = u * u + 1.0 - u * r - bb * (1.0 + v * v - q * v);
      if (std::abs(res1) > 1e-4 * (1.0 + aa) || std::abs(res2) > 1e-4 * (1.0 + bb)) continue;
      const double rad = 1.0 + v * v - q * v;
      if (!(rad > 1e-12)) continue;
      const double s1 = b / std::sqrt(rad);
      const double s2 = u * s1;
      const double s3 = v * s1;
      if (!(s1 > 0.0) || !(s2 > 0.0) || !(s3 > 0.0)) continue;
      const std::array<Eigen::Vector3d, 3> cam = {s1 * bearings[0], s2 * bearings[1],
                                                  s3 * bearings[2]};
      solutions.push_back(absolute_orientation(cam, points));
    }
  }
  return solutions;
}

std::vector<Pose> sample_reference_poses(const Eigen::AlignedBox3d& bbox, int n_translations,
                                         int n_rotations, double shrink, Rng& rng) {
  if (bbox.isEmpty()) throw std::invalid_argument("reference bounding box is empty");
  if (n_translations < 1 || n_rotations < 1)
    throw std::invalid_argument("pose sampling counts must be positive");
  const Eigen::Vector3d center = bbox.center();
  const Eigen::Vector3d half = 0.5 * bbox.sizes() * (1.0 - shrink);
  std::vector<Pose> poses;
  poses.reserve(static_cast<size_t>(n_translations) * static_cast<size_t>(n_rotations));
  for (int i = 0; i < n_translations; ++i) {
    Eigen::Vector3d t;
    for (int k = 0; k < 3; ++k) t[k] = center[k] + rng.uniform(-half[k], half[k]);
    for (int j = 0; j < n_rotations; ++j) {
      poses.push_back(Pose::yaw(kTwoPi * j / n_rotations, t));
    }
  }
  return poses;
}

ReferenceMap build_reference_map(const Panorama& reference, const DepthPredictor& predictor,
                                 const LocalizeConfig& cfg, Rng& rng) {
  const DepthMap depth = predictor.predict(reference);
  const PointCloud cloud = backproject(depth);
  if (cloud.points.empty()) throw std::runtime_error("reference prediction has no valid pixels");

  ReferenceMap map;
  for (const Eigen::Vector3d& pt : cloud.points) map.bbox.extend(pt);

  std::vector<int> pixel_to_point(static_cast<size_t>(reference.width) * reference.height, -1);
  for (size_t i = 0; i < cloud.points.size(); ++i)
    pixel_to_point[static_cast<size_t>(cloud.source_pixel[i])] = static_cast<int>(i);

  const std::vector<Pose> poses =
      sample_reference_poses(map.bbox, cfg.n_translations, cfg.n_rotations, cfg.bbox_shrink, rng);
  map.views.reserve(poses.size());
  for (const Pose& pose : poses) {
    const SynthView view = warp_panorama(reference, depth, pose);
    const ImageFeatures feats = extract_features(view.image, cfg.features);
    ReferenceView ref;
    ref.pose = pose;
    ref.global = feats.global;
    for (const LocalFeature& f : feats.local) {
      const size_t idx = static_cast<size_t>(f.v) * view.image.width + static_cast<size_t>(f.u);
      if (view.fill_dist[idx] != 0) continue;  // only directly splatted pixels carry points
      const int32_t src = view.src_index[idx];
      if (src < 0) continue;
      const int pt = pixel_to_point[static_cast<size_t>(src)];
      if (pt < 0) continue;
      ref.features.push_back(f);
      ref.points.push_back(cloud.points[static_cast<size_t>(pt)]);
    }
    map.views.push_back(std::move(ref));
  }
  return map;
}

std::string localize_status_name(LocalizeStatus status) {
  switch (status) {
    case LocalizeStatus::Ok:
      return "ok";
    case LocalizeStatus::NoMatches:
      return "no_matches";
    case LocalizeStatus::Degenerate:
      return "degenerate";
    case LocalizeStatus::TooFewInliers:
      return "too_few_inliers";
  }
  return "unknown";
}

LocalizeResult localize_query(const Panorama& query, const ReferenceMap& map,
                              const LocalizeConfig& cfg, Rng& rng) {
  LocalizeResult result;
  if (map.views.empty()) return result;
  const ImageFeatures qf = extract_features(query, cfg.features);
  if (qf.local.empty()) return result;

  std::vector<std::pair<float, int>> ranked;
  ranked.reserve(map.views.size());
  for (size_t i = 0; i < map.views.size(); ++i)
    ranked.emplace_back(qf.global.distance(map.views[i].global), static_cast<int>(i));
  std::sort(ranked.begin(), ranked.end());
  const int top_k = std::min<int>(cfg.retrieval_top_k, static_cast<int>(ranked.size()));

  const double thresh = cfg.ransac_threshold_deg * kPi / 180.0;
  Pose best_pose;
  int best_inliers = -1;
  double best_residual = 0.0;
  int best_view = -1;
  int best_matches = 0;
  std::vector<Correspondence> best_corrs;
  bool solved_any = false;

  for (int rank = 0; rank < top_k; ++rank) {
    const ReferenceView& view = map.views[static_cast<size_t>(ranked[rank].second)];
    if (view.features.empty()) continue;
    const std::vector<std::pair<int, int>> matches = match_features(qf.local, view.features);
    best_matches = std::max(best_matches, static_cast<int>(matches.size()));
    if (static_cast<int>(matches.size()) < cfg.min_matches) continue;

    std::vector<Correspondence> corrs;
    corrs.reserve(matches.size());
    for (const auto& [qi, ri] : matches) {
      const LocalFeature& f = qf.local[static_cast<size_t>(qi)];
      Correspondence c;
      c.bearing = pixel_to_dir(f.u, f.v, query.width, query.height);
      c.point = view.points[static_cast<size_t>(ri)];
      corrs.push_back(c);
    }

    const size_t m = corrs.size();
    for (int iter = 0; iter < cfg.ransac_iterations; ++iter) {
      size_t i0 = rng.uniform_index(m);
      size_t i1 = rng.uniform_index(m);
      size_t i2 = rng.uniform_index(m);
      if (i0 == i1 || i0 == i2 || i1 == i2) continue;
      const std::array<Eigen::Vector3d, 3> bearings = {corrs[i0].bearing, corrs[i1].bearing,
                                                       corrs[i2].bearing};
      const std::array<Eigen::Vector3d, 3> points = {corrs[i0].point, corrs[i1].point,
                                                     corrs[i2].point};
      for (const Pose& hyp : solve_p3p(bearings, points)) {
        solved_any = true;
        double total = 0.0;
        const int n = count_inliers(hyp, corrs, thresh, &total);
        if (n > best_inliers || (n == best_inliers && n > 0 && total < best_residual)) {
          best_inliers = n;
          best_residual = total;
          best_pose = hyp;
          best_view = ranked[rank].second;
          best_corrs = corrs;
        }
      }
    }
  }

  result.n_matches = best_matches;
  if (best_matches < cfg.min_matches) {
    result.status = LocalizeStatus::NoMatches;
    return result;
  }
  if (!solved_any || best_inliers < 3) {
    result.status = LocalizeStatus::Degenerate;
    result.best_view = best_view;
    return result;
  }

  std::vector<int> inlier_idx;
  for (size_t i = 0; i < best_corrs.size(); ++i)
    if (angular_residual(best_pose, best_corrs[i]) <= thresh)
      inlier_idx.push_back(static_cast<int>(i));
  Pose refined = refine_pose(best_pose, best_corrs, inlier_idx, cfg.refine_iterations);
  int refined_inliers = count_inliers(refined, best_corrs, thresh);
  if (refined_inliers < best_inliers) {  // refinement should never make support worse
    refined = best_pose;
    refined_inliers = best_inliers;
  }

  result.pose = refined;
  result.best_view = best_view;
  result.n_inliers = refined_inliers;
  result.status =
      refined_inliers >= cfg.min_inliers ? LocalizeStatus::Ok : LocalizeStatus::TooFewInliers;
  return result;
}

std::pair<double, double> pose_error(const Pose& estimate, const Pose& truth) {
  const double t_err = (estimate.translation - truth.translation).norm();
  const double tr = (estimate.rotation.transpose() * truth.rotation).trace();
  const double c = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  return {t_err, std::acos(c) * 180.0 / kPi};
}

}  // namespace pancal
