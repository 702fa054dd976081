#include "pancal/scenegen.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "pancal/geometry.hpp"

namespace pancal {

namespace {

constexpr double kRayEps = 1e-9;

// Per-cell hashed shade. A plain two-tone checker makes every cell corner
// look identical to a local descriptor, which aliases feature matching
// across walls; hashing the cell index (plus a per-surface salt) keeps the
// grid's strong edges while giving each corner a distinctive neighborhood.
float checker_shade(double a, double b, double cell, uint32_t salt) {
  const long pa = static_cast<long>(std::floor(a / cell + 1e-7));
  const long pb = static_cast<long>(std::floor(b / cell + 1e-7));
  uint64_t h = (static_cast<uint64_t>(static_cast<uint32_t>(pa)) << 32) |
               static_cast<uint64_t>(static_cast<uint32_t>(pb));
  h ^= static_cast<uint64_t>(salt) * 0x9e3779b97f4a7c15ull;
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ull;
  h ^= h >> 33;
  return 0.45f + 0.55f * static_cast<float>(static_cast<double>(h >> 11) * 0x1.0p-53);
}

Eigen::Vector3f wall_albedo(int axis, bool positive) {
  // Distinct wall tints keep renders feature-rich for matching and retrieval.
  switch (axis) {
    case 0:
      return positive ? Eigen::Vector3f(0.95f, 0.60f, 0.55f) : Eigen::Vector3f(0.55f, 0.70f, 0.95f);
    case 1:
      return positive ? Eigen::Vector3f(0.58f, 0.90f, 0.60f) : Eigen::Vector3f(0.95f, 0.88f, 0.52f);
    default:
      return positive ? Eigen::Vector3f(0.92f, 0.92f, 0.95f) : Eigen::Vector3f(0.48f, 0.45f, 0.42f);
  }
}

struct BoxHit {
  double t_enter = 0.0, t_exit = 0.0;
  int axis_enter = -1, axis_exit = -1;
  bool valid = false;
};

BoxHit intersect_aabb(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                      const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  BoxHit h;
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  int a0 = -1, a1 = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return h;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      a0 = a;
    }
    if (tb < t1) {
      t1 = tb;
      a1 = a;
    }
  }
  if (t0 > t1) return h;
  h.t_enter = t0;
  h.t_exit = t1;
  h.axis_enter = a0;
  h.axis_exit = a1;
  h.valid = true;
  return h;
}

}  // namespace

int Scene::next_id() {
  static std::atomic<int> counter{1};
  return counter.fetch_add(1);
}

Scene::Scene(double width, double depth, double height)
    : width_(width), depth_(depth), height_(height), id_(next_id()) {
  if (width <= 0 || depth <= 0 || height <= 0) {
    throw std::domain_error("room dimensions must be positive");
  }
}

void Scene::set_checker_size(double s) {
  if (s < 0.25) throw std::domain_error("checker cells below 0.25 m are not supported");
  checker_size_ = s;
}

RayHit Scene::raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
  RayHit best;
  double best_t = std::numeric_limits<double>::infinity();

  const Eigen::Vector3d room_lo(-width_ / 2, -depth_ / 2, 0.0);
  const Eigen::Vector3d room_hi(width_ / 2, depth_ / 2, height_);
  const BoxHit room = intersect_aabb(room_lo, room_hi, origin, dir);
  if (room.valid) {
    // From inside the shell we hit the exit face; from outside, the entry face.
    double t;
    int axis;
    if (room.t_enter > kRayEps) {
      t = room.t_enter;
      axis = room.axis_enter;
    } else if (room.t_exit > kRayEps) {
      t = room.t_exit;
      axis = room.axis_exit;
    } else {
      t = -1.0;
      axis = -1;
    }
    if (t > 0.0 && axis >= 0) {
      const Eigen::Vector3d p = origin + t * dir;
      const bool positive = dir[axis] > 0.0 ? (t == room.t_exit) : (t != room.t_exit);
      // In-plane coordinates for the cell pattern.
      const int a = (axis + 1) % 3, b = (axis + 2) % 3;
      Eigen::Vector3f c = wall_albedo(axis, positive);
      c *= checker_shade(p[a], p[b], checker_size_,
                         static_cast<uint32_t>(axis * 2 + (positive ? 1 : 0)));
      best_t = t;
      best.color = c;
      best.hit = true;
    }
  }

  for (const auto& box : boxes_) {
    const BoxHit h =
        intersect_aabb(box.center - box.half, box.center + box.half, origin, dir);
    if (!h.valid) continue;
    double t;
    int axis;
    if (h.t_enter > kRayEps) {
      t = h.t_enter;
      axis = h.axis_enter;
    } else if (h.t_exit > kRayEps) {
      t = h.t_exit;
      axis = h.axis_exit;
    } else {
      continue;
    }
    if (t >= best_t) continue;
    const Eigen::Vector3d p = origin + t * dir;
    const bool positive = dir[axis] > 0.0 ? (t == h.t_exit) : (t != h.t_exit);
    const int a = (axis + 1) % 3, b = (axis + 2) % 3;
    Eigen::Vector3f c = box.albedo;
    if (box.checker) {
      c *= checker_shade(p[a], p[b], checker_size_,
                         8u + static_cast<uint32_t>(axis * 2 + (positive ? 1 : 0)));
    }
    best_t = t;
    best.color = c;
    best.hit = true;
  }

  for (const auto& cyl : cylinders_) {
    // Side surface.
    const double ox = origin.x() - cyl.cx, oy = origin.y() - cyl.cy;
    const double A = dir.x() * dir.x() + dir.y() * dir.y();
    double t_side = std::numeric_limits<double>::infinity();
    if (A > 1e-15) {
      const double B = 2.0 * (ox * dir.x() + oy * dir.y());
      const double C = ox * ox + oy * oy - cyl.radius * cyl.radius;
      const double disc = B * B - 4 * A * C;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        for (double t : {(-B - sq) / (2 * A), (-B + sq) / (2 * A)}) {
          if (t > kRayEps && t < t_side) {
            const double z = origin.z() + t * dir.z();
            if (z >= cyl.z0 && z <= cyl.z1) t_side = t;
          }
        }
      }
    }
    // Caps.
    for (double zc : {cyl.z0, cyl.z1}) {
      if (std::abs(dir.z()) < 1e-15) continue;
      const double t = (zc - origin.z()) / dir.z();
      if (t <= kRayEps || t >= t_side) continue;
      const double x = ox + t * dir.x(), y = oy + t * dir.y();
      if (x * x + y * y <= cyl.radius * cyl.radius) t_side = t;
    }
    if (t_side < best_t) {
      const Eigen::Vector3d p = origin + t_side * dir;
      Eigen::Vector3f c = cyl.albedo;
      if (cyl.checker) {
        const double theta = std::atan2(p.y() - cyl.cy, p.x() - cyl.cx);
        c *= checker_shade(theta * cyl.radius, p.z(), checker_size_, 16u);
      }
      best_t = t_side;
      best.color = c;
      best.hit = true;
    }
  }

  best.t = best.hit ? best_t : 0.0;
  return best;
}

bool Scene::in_free_space(const Eigen::Vector3d& p, double margin) const {
  if (p.x() < -width_ / 2 + margin || p.x() > width_ / 2 - margin) return false;
  if (p.y() < -depth_ / 2 + margin || p.y() > depth_ / 2 - margin) return false;
  if (p.z() < margin || p.z() > height_ - margin) return false;
  for (const auto& box : boxes_) {
    const Eigen::Vector3d lo = box.center - box.half, hi = box.center + box.half;
    if (p.x() > lo.x() - margin && p.x() < hi.x() + margin && p.y() > lo.y() - margin &&
        p.y() < hi.y() + margin && p.z() > lo.z() - margin && p.z() < hi.z() + margin) {
      return false;
    }
  }
  for (const auto& cyl : cylinders_) {
    const double dx = p.x() - cyl.cx, dy = p.y() - cyl.cy;
    if (p.z() > cyl.z0 - margin && p.z() < cyl.z1 + margin &&
        std::hypot(dx, dy) < cyl.radius + margin) {
      return false;
    }
  }
  return true;
}

nlohmann::json Scene::to_json() const {
  nlohmann::json j;
  j["room"] = {{"width", width_}, {"depth", depth_}, {"height", height_}};
  j["checker_size"] = checker_size_;
  j["boxes"] = nlohmann::json::array();
  for (const auto& b : boxes_) {
    j["boxes"].push_back({{"center", {b.center.x(), b.center.y(), b.center.z()}},
                          {"half", {b.half.x(), b.half.y(), b.half.z()}},
                          {"albedo", {b.albedo.x(), b.albedo.y(), b.albedo.z()}},
                          {"checker", b.checker}});
  }
  j["cylinders"] = nlohmann::json::array();
  for (const auto& c : cylinders_) {
    j["cylinders"].push_back({{"center", {c.cx, c.cy}},
                              {"radius", c.radius},
                              {"z", {c.z0, c.z1}},
                              {"albedo", {c.albedo.x(), c.albedo.y(), c.albedo.z()}},
                              {"checker", c.checker}});
  }
  return j;
}

Scene Scene::from_json(const nlohmann::json& j) {
  const auto& room = j.at("room");
  Scene scene(room.at("width").get<double>(), room.at("depth").get<double>(),
              room.at("height").get<double>());
  if (j.contains("checker_size")) scene.set_checker_size(j["checker_size"].get<double>());
  for (const auto& b : j.value("boxes", nlohmann::json::array())) {
    BoxObstacle box;
    for (int i = 0; i < 3; ++i) {
      box.center[i] = b.at("center")[i].get<double>();
      box.half[i] = b.at("half")[i].get<double>();
      box.albedo[i] = b.at("albedo")[i].get<float>();
    }
    box.checker = b.value("checker", true);
    scene.add_box(box);
  }
  for (const auto& c : j.value("cylinders", nlohmann::json::array())) {
    CylinderObstacle cyl;
    cyl.cx = c.at("center")[0].get<double>();
    cyl.cy = c.at("center")[1].get<double>();
    cyl.radius = c.at("radius").get<double>();
    cyl.z0 = c.at("z")[0].get<double>();
    cyl.z1 = c.at("z")[1].get<double>();
    for (int i = 0; i < 3; ++i) cyl.albedo[i] = c.at("albedo")[i].get<float>();
    cyl.checker = c.value("checker", true);
    scene.add_cylinder(cyl);
  }
  return scene;
}

std::pair<Panorama, DepthMap> render_panorama(const Scene& scene, const Pose& pose, int width,
                                              int height,
                                              const std::optional<SceneScale>& scale) {
  if (!pose.is_orthonormal(1e-6)) throw std::domain_error("camera rotation is not orthonormal");
  Panorama pano = Panorama::create(width, height);
  DepthMap depth = DepthMap::create(width, height);

  Eigen::Vector3d origin = pose.translation;
  Eigen::Matrix3d ray_map = Eigen::Matrix3d::Identity();
  bool scaled = false;
  if (scale && std::abs(scale->scale_xy - 1.0) > 1e-12) {
    if (scale->scale_xy <= 0.0) throw std::domain_error("scene scale must be positive");
    // Rendering the scaled scene A(p) = c0 + R0 * diag(k, k, 1) * R0^T * (p - c0)
    // equals casting pre-image rays through the original scene.
    const Eigen::Matrix3d r0 = scale->anchor.rotation;
    const Eigen::Vector3d c0 = scale->anchor.translation;
    const Eigen::Vector3d inv_diag(1.0 / scale->scale_xy, 1.0 / scale->scale_xy, 1.0);
    ray_map = r0 * inv_diag.asDiagonal() * r0.transpose();
    origin = c0 + ray_map * (pose.translation - c0);
    scaled = true;
  }

  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Eigen::Vector3d d_world = pose.rotation * pixel_to_dir(u, v, width, height);
      const Eigen::Vector3d w = scaled ? Eigen::Vector3d(ray_map * d_world) : d_world;
      const double wn = w.norm();
      const RayHit hit = scene.raycast(origin, w / wn);
      const size_t idx = static_cast<size_t>(v) * width + u;
      if (!hit.hit) {
        depth.valid[idx] = 0;
        continue;
      }
      float* px = pano.px(u, v);
      for (int c = 0; c < 3; ++c) px[c] = hit.color[c];
      depth.depth[idx] = static_cast<float>(hit.t / wn);
    }
  }

  RenderTag tag;
  tag.scene_id = scene.id();
  tag.camera = pose;
  tag.scale_xy = scale ? scale->scale_xy : 1.0;
  tag.anchor = scale ? scale->anchor : pose;
  pano.tag = tag;
  return {std::move(pano), std::move(depth)};
}

namespace {

bool disjoint_from_all(const Scene& scene, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                       double margin) {
  for (const auto& b : scene.boxes()) {
    const Eigen::Vector3d blo = b.center - b.half, bhi = b.center + b.half;
    const bool overlap = lo.x() < bhi.x() + margin && hi.x() > blo.x() - margin &&
                         lo.y() < bhi.y() + margin && hi.y() > blo.y() - margin;
    if (overlap) return false;
  }
  for (const auto& c : scene.cylinders()) {
    const double cx = std::clamp(c.cx, lo.x() - margin, hi.x() + margin);
    const double cy = std::clamp(c.cy, lo.y() - margin, hi.y() + margin);
    if (std::hypot(cx - c.cx, cy - c.cy) < c.radius + margin) return false;
  }
  return true;
}

Eigen::Vector3f random_albedo(Rng& rng) {
  return {static_cast<float>(rng.uniform(0.35, 0.95)), static_cast<float>(rng.uniform(0.35, 0.95)),
          static_cast<float>(rng.uniform(0.35, 0.95))};
}

}  // namespace

Scene generate_scene(const SceneGenConfig& cfg, Rng& rng) {
  const double w = rng.uniform(cfg.room_w_min, cfg.room_w_max);
  const double d = rng.uniform(cfg.room_d_min, cfg.room_d_max);
  const double h = rng.uniform(cfg.room_h_min, cfg.room_h_max);
  Scene scene(w, d, h);
  scene.set_checker_size(cfg.checker_size);

  const int n_boxes =
      cfg.min_boxes + static_cast<int>(rng.uniform_index(cfg.max_boxes - cfg.min_boxes + 1));
  for (int i = 0; i < n_boxes; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      BoxObstacle box;
      box.half = {rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.45), rng.uniform(0.2, 0.6)};
      const double x_lim = w / 2 - cfg.margin - box.half.x();
      const double y_lim = d / 2 - cfg.margin - box.half.y();
      if (x_lim <= 0 || y_lim <= 0) break;
      box.center = {rng.uniform(-x_lim, x_lim), rng.uniform(-y_lim, y_lim), box.half.z()};
      box.albedo = random_albedo(rng);
      box.checker = rng.uniform() < 0.5;
      if (disjoint_from_all(scene, box.center - box.half, box.center + box.half, cfg.margin)) {
        scene.add_box(box);
        break;
      }
    }
  }

  const int n_cyls = cfg.min_cylinders +
                     static_cast<int>(rng.uniform_index(cfg.max_cylinders - cfg.min_cylinders + 1));
  for (int i = 0; i < n_cyls; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      CylinderObstacle cyl;
      cyl.radius = rng.uniform(0.12, 0.35);
      const double x_lim = w / 2 - cfg.margin - cyl.radius;
      const double y_lim = d / 2 - cfg.margin - cyl.radius;
      if (x_lim <= 0 || y_lim <= 0) break;
      cyl.cx = rng.uniform(-x_lim, x_lim);
      cyl.cy = rng.uniform(-y_lim, y_lim);
      cyl.z0 = 0.0;
      cyl.z1 = rng.uniform(0.5, std::min(1.8, h - 0.2));
      cyl.albedo = random_albedo(rng);
      cyl.checker = rng.uniform() < 0.5;
      const Eigen::Vector3d lo(cyl.cx - cyl.radius, cyl.cy - cyl.radius, 0.0);
      const Eigen::Vector3d hi(cyl.cx + cyl.radius, cyl.cy + cyl.radius, cyl.z1);
      if (disjoint_from_all(scene, lo, hi, cfg.margin)) {
        scene.add_cylinder(cyl);
        break;
      }
    }
  }
  return scene;
}

Eigen::Vector3d sample_camera_position(const Scene& scene, Rng& rng, double clearance,
                                       double camera_height) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Eigen::Vector3d p(
        rng.uniform(-scene.room_width() / 2 + clearance, scene.room_width() / 2 - clearance),
        rng.uniform(-scene.room_depth() / 2 + clearance, scene.room_depth() / 2 - clearance),
        camera_height);
    if (scene.in_free_space(p, clearance)) return p;
  }
  throw std::runtime_error("no free camera position found; scene too crowded");
}

}  // namespace pancal
