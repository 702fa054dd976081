#include "pancal/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pancal/geometry.hpp"
#include "pancal/kdtree.hpp"

namespace pancal {

OccupancyGrid OccupancyGrid::create(double resolution, double origin_x, double origin_y,
                                    int cols, int rows) {
  if (resolution <= 0.0 || cols <= 0 || rows <= 0) {
    throw std::domain_error("occupancy grid needs positive resolution and extent");
  }
  OccupancyGrid g;
  g.resolution = resolution;
  g.origin_x = origin_x;
  g.origin_y = origin_y;
  g.cols = cols;
  g.rows = rows;
  g.cells.assign(static_cast<size_t>(cols) * rows, CellState::Unknown);
  return g;
}

bool OccupancyGrid::index_of(double x, double y, int& ix, int& iy) const {
  // The small bias keeps points that lie exactly on a cell edge in a
  // deterministic cell.
  ix = static_cast<int>(std::floor((x - origin_x) / resolution + 1e-9));
  iy = static_cast<int>(std::floor((y - origin_y) / resolution + 1e-9));
  return contains(ix, iy);
}

Eigen::Vector2d OccupancyGrid::center_of(int ix, int iy) const {
  return {origin_x + (ix + 0.5) * resolution, origin_y + (iy + 0.5) * resolution};
}

std::vector<Eigen::Vector2d> OccupancyGrid::occupied_centers() const {
  std::vector<Eigen::Vector2d> out;
  for (int iy = 0; iy < rows; ++iy) {
    for (int ix = 0; ix < cols; ++ix) {
      if (at(ix, iy) == CellState::Occupied) out.push_back(center_of(ix, iy));
    }
  }
  return out;
}

size_t OccupancyGrid::count(CellState s) const {
  size_t n = 0;
  for (CellState c : cells) n += c == s;
  return n;
}

namespace {

/// Marks cells on the segment from (ix0, iy0) toward (ix1, iy1) free,
/// stopping at the first occupied cell. `include_end` frees the endpoint too.
void trace_free(OccupancyGrid& grid, int ix0, int iy0, int ix1, int iy1, bool include_end) {
  int dx = std::abs(ix1 - ix0), dy = -std::abs(iy1 - iy0);
  const int sx = ix0 < ix1 ? 1 : -1, sy = iy0 < iy1 ? 1 : -1;
  int err = dx + dy;
  int x = ix0, y = iy0;
  while (true) {
    const bool at_end = x == ix1 && y == iy1;
    if (!grid.contains(x, y)) return;
    if (grid.at(x, y) == CellState::Occupied) return;
    if (!at_end || include_end) grid.set(x, y, CellState::Free);
    if (at_end) return;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
}

}  // namespace

namespace {

struct Endpoint {
  double x, y;
  bool in_band;
};

std::vector<Endpoint> collect_endpoints(const DepthMap& depth, const GridConfig& cfg) {
  if (cfg.band_low >= cfg.band_high) throw std::domain_error("empty mapping height band");
  std::vector<Endpoint> endpoints;
  endpoints.reserve(depth.pixel_count());
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const size_t idx = static_cast<size_t>(v) * depth.width + u;
      if (!depth.valid[idx]) continue;
      const Eigen::Vector3d p =
          pixel_to_dir(u, v, depth.width, depth.height) * static_cast<double>(depth.depth[idx]);
      if (p.z() > cfg.band_high) continue;  // above the band: ceiling, lamps
      if (std::hypot(p.x(), p.y()) > cfg.max_range) continue;
      endpoints.push_back({p.x(), p.y(), p.z() >= cfg.band_low});
    }
  }
  return endpoints;
}

}  // namespace

OccupancyGrid depth_to_local_grid(const DepthMap& depth, const GridConfig& cfg) {
  const std::vector<Endpoint> endpoints = collect_endpoints(depth, cfg);
  double reach = 0.0;
  for (const auto& e : endpoints) reach = std::max(reach, std::hypot(e.x, e.y));

  const int half = std::max(1, static_cast<int>(std::ceil(reach / cfg.resolution)) + 1);
  const int dim = 2 * half + 1;
  OccupancyGrid grid = OccupancyGrid::create(cfg.resolution, -(half + 0.5) * cfg.resolution,
                                             -(half + 0.5) * cfg.resolution, dim, dim);

  for (const auto& e : endpoints) {
    if (!e.in_band) continue;
    int ix, iy;
    if (grid.index_of(e.x, e.y, ix, iy)) grid.set(ix, iy, CellState::Occupied);
  }
  for (const auto& e : endpoints) {
    int ix, iy;
    if (!grid.index_of(e.x, e.y, ix, iy)) continue;
    trace_free(grid, half, half, ix, iy, /*include_end=*/!e.in_band);
  }
  return grid;
}

Scan depth_to_scan(const DepthMap& depth, const GridConfig& cfg) {
  Scan scan;
  for (const auto& e : collect_endpoints(depth, cfg)) {
    (e.in_band ? scan.obstacles : scan.floor).emplace_back(e.x, e.y);
  }
  return scan;
}

Pose2D Pose2D::compose(const Pose2D& other) const {
  const double c = std::cos(theta), s = std::sin(theta);
  return {x + c * other.x - s * other.y, y + s * other.x + c * other.y,
          wrap_angle(theta + other.theta)};
}

Pose2D Pose2D::inverse() const {
  const double c = std::cos(theta), s = std::sin(theta);
  return {-(c * x + s * y), -(-s * x + c * y), wrap_angle(-theta)};
}

Eigen::Vector2d Pose2D::apply(const Eigen::Vector2d& p) const {
  const double c = std::cos(theta), s = std::sin(theta);
  return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
}

double Pose2D::wrap_angle(double a) {
  while (a >= kPi) a -= kTwoPi;
  while (a < -kPi) a += kTwoPi;
  return a;
}

PoseEstimate estimate_pose(const OccupancyGrid& ref_grid,
                           const std::vector<Eigen::Vector2d>& scan, const Pose2D& odometry,
                           const IcpConfig& cfg) {
  PoseEstimate est;
  est.pose = odometry;

  const std::vector<Eigen::Vector2d> ref = ref_grid.occupied_centers();
  const std::vector<Eigen::Vector2d>& src = scan;
  if (ref.empty() || src.empty()) return est;

  const KdTree2 tree(ref);
  Pose2D T = odometry;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    est.iterations = iter + 1;
    std::vector<Eigen::Vector2d> a, b;  // matched src (cur frame), ref (prev frame)
    a.reserve(src.size());
    b.reserve(src.size());
    for (const auto& p : src) {
      const Eigen::Vector2d q = T.apply(p);
      const auto nn = tree.nearest(q);
      if (nn.sq_dist <= cfg.nn_gate * cfg.nn_gate) {
        a.push_back(p);
        b.push_back(ref[nn.index]);
      }
    }
    est.inlier_fraction = static_cast<double>(a.size()) / static_cast<double>(src.size());
    if (a.size() < 3) break;

    Eigen::Vector2d ca = Eigen::Vector2d::Zero(), cb = Eigen::Vector2d::Zero();
    for (size_t i = 0; i < a.size(); ++i) {
      ca += a[i];
      cb += b[i];
    }
    ca /= static_cast<double>(a.size());
    cb /= static_cast<double>(a.size());
    double s_cross = 0.0, s_dot = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      const Eigen::Vector2d da = a[i] - ca, db = b[i] - cb;
      s_dot += da.dot(db);
      s_cross += da.x() * db.y() - da.y() * db.x();
    }
    const double theta = std::atan2(s_cross, s_dot);
    const double c = std::cos(theta), s = std::sin(theta);
    Pose2D next;
    next.theta = theta;
    next.x = cb.x() - (c * ca.x() - s * ca.y());
    next.y = cb.y() - (s * ca.x() + c * ca.y());

    const double dt = std::hypot(next.x - T.x, next.y - T.y);
    const double dr = std::abs(Pose2D::wrap_angle(next.theta - T.theta));
    T = next;
    if (dt < cfg.convergence_eps && dr < cfg.convergence_eps) break;
  }

  if (est.inlier_fraction < cfg.min_inlier_fraction) {
    est.pose = odometry;
    est.from_icp = false;
    return est;
  }
  est.pose = T;
  est.from_icp = true;
  return est;
}

PoseEstimate estimate_pose(const OccupancyGrid& prev, const OccupancyGrid& cur,
                           const Pose2D& odometry, const IcpConfig& cfg) {
  return estimate_pose(prev, cur.occupied_centers(), odometry, cfg);
}

namespace {

void grow_to_include(OccupancyGrid& grid, double x, double y) {
  int ix = static_cast<int>(std::floor((x - grid.origin_x) / grid.resolution + 1e-9));
  int iy = static_cast<int>(std::floor((y - grid.origin_y) / grid.resolution + 1e-9));
  int grow_left = std::max(0, -ix), grow_down = std::max(0, -iy);
  int grow_right = std::max(0, ix - (grid.cols - 1)), grow_up = std::max(0, iy - (grid.rows - 1));
  if (!(grow_left | grow_down | grow_right | grow_up)) return;

  OccupancyGrid bigger = OccupancyGrid::create(
      grid.resolution, grid.origin_x - grow_left * grid.resolution,
      grid.origin_y - grow_down * grid.resolution, grid.cols + grow_left + grow_right,
      grid.rows + grow_down + grow_up);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      bigger.set(c + grow_left, r + grow_down, grid.at(c, r));
    }
  }
  grid = std::move(bigger);
}

void fuse_cell(OccupancyGrid& grid, int ix, int iy, CellState s) {
  const CellState old = grid.at(ix, iy);
  if (s == CellState::Occupied || old == CellState::Unknown) {
    grid.set(ix, iy, s);
  }
  // Free never downgrades Occupied; Unknown never overwrites anything.
}

}  // namespace

namespace {

/// Seeds an empty global grid with a single cell on the resolution lattice.
void seed_grid(OccupancyGrid& global, double resolution, const Pose2D& pose) {
  global = OccupancyGrid::create(resolution, std::floor(pose.x / resolution) * resolution,
                                 std::floor(pose.y / resolution) * resolution, 1, 1);
}

}  // namespace

void stitch_into(OccupancyGrid& global, const OccupancyGrid& local, const Pose2D& pose) {
  if (global.cols == 0) seed_grid(global, local.resolution, pose);
  if (std::abs(global.resolution - local.resolution) > 1e-12) {
    throw std::domain_error("grid resolutions differ");
  }
  for (double cx : {0.0, static_cast<double>(local.cols)}) {
    for (double cy : {0.0, static_cast<double>(local.rows)}) {
      const Eigen::Vector2d corner = pose.apply(
          {local.origin_x + cx * local.resolution, local.origin_y + cy * local.resolution});
      grow_to_include(global, corner.x(), corner.y());
    }
  }
  for (int iy = 0; iy < local.rows; ++iy) {
    for (int ix = 0; ix < local.cols; ++ix) {
      const CellState s = local.at(ix, iy);
      if (s == CellState::Unknown) continue;
      const Eigen::Vector2d w = pose.apply(local.center_of(ix, iy));
      int gx, gy;
      if (global.index_of(w.x(), w.y(), gx, gy)) fuse_cell(global, gx, gy, s);
    }
  }
}

void stitch_scan(OccupancyGrid& global, const Scan& scan, const Pose2D& pose) {
  if (global.cols == 0) {
    if (global.resolution <= 0.0) throw std::domain_error("scan stitching needs a resolution");
    seed_grid(global, global.resolution, pose);
  }
  grow_to_include(global, pose.x, pose.y);

  std::vector<Eigen::Vector2d> obstacles, floor;
  obstacles.reserve(scan.obstacles.size());
  floor.reserve(scan.floor.size());
  for (const auto& p : scan.obstacles) {
    const Eigen::Vector2d w = pose.apply(p);
    grow_to_include(global, w.x(), w.y());
    obstacles.push_back(w);
  }
  for (const auto& p : scan.floor) {
    const Eigen::Vector2d w = pose.apply(p);
    grow_to_include(global, w.x(), w.y());
    floor.push_back(w);
  }

  int cx, cy;
  if (!global.index_of(pose.x, pose.y, cx, cy)) return;
  for (const auto& w : obstacles) {
    int ix, iy;
    if (global.index_of(w.x(), w.y(), ix, iy)) global.set(ix, iy, CellState::Occupied);
  }
  for (const auto& w : obstacles) {
    int ix, iy;
    if (global.index_of(w.x(), w.y(), ix, iy)) {
      trace_free(global, cx, cy, ix, iy, /*include_end=*/false);
    }
  }
  for (const auto& w : floor) {
    int ix, iy;
    if (global.index_of(w.x(), w.y(), ix, iy)) {
      trace_free(global, cx, cy, ix, iy, /*include_end=*/true);
    }
  }
}

MapMetrics map_metrics(const OccupancyGrid& a, const OccupancyGrid& b) {
  if (std::abs(a.resolution - b.resolution) > 1e-12) {
    throw std::domain_error("map metrics need equal resolutions");
  }
  const std::vector<Eigen::Vector2d> occ_a = a.occupied_centers();
  const std::vector<Eigen::Vector2d> occ_b = b.occupied_centers();
  if (occ_a.empty() || occ_b.empty()) {
    throw std::runtime_error("map metrics need occupied cells in both grids");
  }

  MapMetrics m;
  {
    const KdTree2 ta(occ_a), tb(occ_b);
    double sum_ab = 0.0, sum_ba = 0.0;
    for (const auto& p : occ_a) sum_ab += std::sqrt(tb.nearest(p).sq_dist);
    for (const auto& p : occ_b) sum_ba += std::sqrt(ta.nearest(p).sq_dist);
    m.chamfer = 0.5 * (sum_ab / static_cast<double>(occ_a.size()) +
                       sum_ba / static_cast<double>(occ_b.size()));
  }

  // Rasterize occupancy indicators onto the union lattice.
  const double res = a.resolution;
  const double min_x = std::min(a.origin_x, b.origin_x);
  const double min_y = std::min(a.origin_y, b.origin_y);
  const double max_x = std::max(a.origin_x + a.cols * res, b.origin_x + b.cols * res);
  const double max_y = std::max(a.origin_y + a.rows * res, b.origin_y + b.rows * res);
  const int cols = std::max(1, static_cast<int>(std::lround((max_x - min_x) / res)));
  const int rows = std::max(1, static_cast<int>(std::lround((max_y - min_y) / res)));

  std::vector<uint8_t> ia(static_cast<size_t>(cols) * rows, 0), ib = ia;
  auto put = [&](const std::vector<Eigen::Vector2d>& pts, std::vector<uint8_t>& img) {
    for (const auto& p : pts) {
      const int ix = static_cast<int>(std::floor((p.x() - min_x) / res + 1e-9));
      const int iy = static_cast<int>(std::floor((p.y() - min_y) / res + 1e-9));
      if (ix >= 0 && ix < cols && iy >= 0 && iy < rows) {
        img[static_cast<size_t>(iy) * cols + ix] = 1;
      }
    }
  };
  put(occ_a, ia);
  put(occ_b, ib);

  size_t diff = 0, inter = 0, uni = 0;
  for (size_t i = 0; i < ia.size(); ++i) {
    diff += ia[i] != ib[i];
    inter += ia[i] && ib[i];
    uni += ia[i] || ib[i];
  }
  const double n = static_cast<double>(ia.size());
  m.mae = diff / n;
  m.psnr = diff == 0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(n / diff);
  m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  return m;
}

OccupancyGrid scene_occupancy_grid(const Scene& scene, const GridConfig& cfg,
                                   double camera_height) {
  const double res = cfg.resolution;
  const double w2 = scene.room_width() / 2, d2 = scene.room_depth() / 2;
  const double pad = 2 * res;
  // Snap the origin to the resolution lattice: SLAM maps live on that lattice
  // (stitching grows by whole cells from a snapped seed), and the union
  // rasterization in map_metrics is only cell-exact when both grids share it.
  const double ox = std::floor((-w2 - pad) / res) * res;
  const double oy = std::floor((-d2 - pad) / res) * res;
  const int cols = static_cast<int>(std::ceil((w2 + pad - ox) / res));
  const int rows = static_cast<int>(std::ceil((d2 + pad - oy) / res));
  OccupancyGrid grid = OccupancyGrid::create(res, ox, oy, cols, rows);

  const double z_lo = camera_height + cfg.band_low;
  const double z_hi = camera_height + cfg.band_high;

  auto mark = [&](double x, double y) {
    int ix, iy;
    if (grid.index_of(x, y, ix, iy)) grid.set(ix, iy, CellState::Occupied);
  };
  auto mark_segment = [&](double x0, double y0, double x1, double y1) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int steps = std::max(1, static_cast<int>(std::ceil(len / (res * 0.25))));
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      mark(x0 + t * (x1 - x0), y0 + t * (y1 - y0));
    }
  };

  // Free interior first; surfaces overwrite.
  for (int iy = 0; iy < rows; ++iy) {
    for (int ix = 0; ix < cols; ++ix) {
      const Eigen::Vector2d c = grid.center_of(ix, iy);
      if (c.x() > -w2 && c.x() < w2 && c.y() > -d2 && c.y() < d2) {
        grid.set(ix, iy, CellState::Free);
      }
    }
  }

  // Walls intersect every band.
  mark_segment(-w2, -d2, w2, -d2);
  mark_segment(-w2, d2, w2, d2);
  mark_segment(-w2, -d2, -w2, d2);
  mark_segment(w2, -d2, w2, d2);

  for (const auto& box : scene.boxes()) {
    if (box.center.z() + box.half.z() < z_lo || box.center.z() - box.half.z() > z_hi) continue;
    const double x0 = box.center.x() - box.half.x(), x1 = box.center.x() + box.half.x();
    const double y0 = box.center.y() - box.half.y(), y1 = box.center.y() + box.half.y();
    mark_segment(x0, y0, x1, y0);
    mark_segment(x0, y1, x1, y1);
    mark_segment(x0, y0, x0, y1);
    mark_segment(x1, y0, x1, y1);
  }
  for (const auto& cyl : scene.cylinders()) {
    if (cyl.z1 < z_lo || cyl.z0 > z_hi) continue;
    const int steps = std::max(8, static_cast<int>(std::ceil(kTwoPi * cyl.radius / (res * 0.25))));
    for (int i = 0; i < steps; ++i) {
      const double t = kTwoPi * i / steps;
      mark(cyl.cx + cyl.radius * std::cos(t), cyl.cy + cyl.radius * std::sin(t));
    }
  }
  return grid;
}

namespace {

Pose agent_camera_pose(const Pose2D& p, double camera_height) {
  return Pose::yaw(p.theta, {p.x, p.y, camera_height});
}

bool forward_is_clear(const Scene& scene, const Pose2D& p, double step, double clearance,
                      double camera_height) {
  const Pose2D target = p.compose({step, 0.0, 0.0});
  // Check the endpoint and the midpoint of the motion.
  for (double t : {0.5, 1.0}) {
    const Pose2D q = p.compose({step * t, 0.0, 0.0});
    if (!scene.in_free_space({q.x, q.y, camera_height}, clearance)) return false;
  }
  (void)target;
  return true;
}

}  // namespace

TrajectorySpec plan_exploration(const Scene& scene, int n_steps, const SlamConfig& cfg,
                                Rng& rng) {
  TrajectorySpec traj;
  const Eigen::Vector3d start =
      sample_camera_position(scene, rng, cfg.collision_clearance + 0.1, cfg.camera_height);
  traj.start = {start.x(), start.y(), rng.uniform(-kPi, kPi)};

  Pose2D pose = traj.start;
  const double turn = traj.turn_deg * kPi / 180.0;
  int spin_guard = 0;
  while (static_cast<int>(traj.actions.size()) < n_steps) {
    const bool clear = forward_is_clear(scene, pose, traj.forward_step,
                                        cfg.collision_clearance, cfg.camera_height);
    const double roll = rng.uniform();
    if (clear && (roll < 0.6 || spin_guard > 8)) {
      traj.actions.push_back(AgentAction::Forward);
      pose = pose.compose({traj.forward_step, 0.0, 0.0});
      spin_guard = 0;
    } else if (roll < 0.8) {
      traj.actions.push_back(AgentAction::TurnLeft);
      pose = pose.compose({0.0, 0.0, turn});
      ++spin_guard;
    } else {
      traj.actions.push_back(AgentAction::TurnRight);
      pose = pose.compose({0.0, 0.0, -turn});
      ++spin_guard;
    }
  }
  return traj;
}

SlamResult run_slam(const Scene& scene, const DepthPredictor& predictor,
                    const TrajectorySpec& traj, const SlamConfig& cfg) {
  const int width = cfg.width, height = cfg.width / 2;
  Rng noise(hash_combine(cfg.seed, 0x736c616dULL));

  SlamResult result;
  Pose2D gt_pose = traj.start;
  Pose2D est_pose = traj.start;  // the first frame anchors the map

  struct Observation {
    Panorama pano;
    Scan scan;
  };
  auto observe = [&](const Pose2D& p) {
    auto [pano, gt_depth] =
        render_panorama(scene, agent_camera_pose(p, cfg.camera_height), width, height);
    (void)gt_depth;
    const DepthMap depth = predictor.predict(pano);
    return Observation{std::move(pano), depth_to_scan(depth, cfg.grid)};
  };

  Observation first = observe(gt_pose);
  result.map = OccupancyGrid{};
  result.map.resolution = cfg.grid.resolution;
  stitch_scan(result.map, first.scan, est_pose);
  result.estimated.push_back(est_pose);
  result.ground_truth.push_back(gt_pose);

  const double turn = traj.turn_deg * kPi / 180.0;
  for (const AgentAction action : traj.actions) {
    Pose2D delta;
    switch (action) {
      case AgentAction::Forward:
        delta = {traj.forward_step, 0.0, 0.0};
        break;
      case AgentAction::TurnLeft:
        delta = {0.0, 0.0, turn};
        break;
      case AgentAction::TurnRight:
        delta = {0.0, 0.0, -turn};
        break;
    }
    if (action == AgentAction::Forward &&
        !forward_is_clear(scene, gt_pose, traj.forward_step, cfg.collision_clearance,
                          cfg.camera_height)) {
      ++result.collisions;
      continue;
    }
    gt_pose = gt_pose.compose(delta);

    Pose2D odom = delta;
    if (cfg.odom_sigma_xy > 0.0 || cfg.odom_sigma_theta > 0.0) {
      odom.x += cfg.odom_sigma_xy * noise.normal();
      odom.y += cfg.odom_sigma_xy * noise.normal();
      odom.theta = Pose2D::wrap_angle(odom.theta + cfg.odom_sigma_theta * noise.normal());
    }

    Observation obs = observe(gt_pose);
    // Scan-to-map: matching against the accumulated map anchors the estimate
    // and avoids the drift of chaining scan-to-scan registrations.
    const Pose2D init = est_pose.compose(odom);
    const PoseEstimate match = estimate_pose(result.map, obs.scan.obstacles, init, cfg.icp);
    est_pose = match.pose;
    stitch_scan(result.map, obs.scan, est_pose);

    result.estimated.push_back(est_pose);
    result.ground_truth.push_back(gt_pose);
    result.log.push_back({action, std::move(obs.pano)});
  }
  return result;
}

}  // namespace pancal
