#pragma once

#include <vector>

#include "pancal/calibration.hpp"
#include "pancal/predictor.hpp"
#include "pancal/scenegen.hpp"

namespace pancal {

enum class CellState : uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

/// 2D occupancy raster. origin is the world (x, y) of the lower-left corner
/// of cell (0, 0); cell (ix, iy) spans
/// [origin + ix * res, origin + (ix + 1) * res) x [...iy...].
struct OccupancyGrid {
  double resolution = 0.05;
  double origin_x = 0.0, origin_y = 0.0;
  int cols = 0, rows = 0;
  std::vector<CellState> cells;

  static OccupancyGrid create(double resolution, double origin_x, double origin_y, int cols,
                              int rows);

  CellState at(int ix, int iy) const { return cells[static_cast<size_t>(iy) * cols + ix]; }
  void set(int ix, int iy, CellState s) { cells[static_cast<size_t>(iy) * cols + ix] = s; }
  bool contains(int ix, int iy) const { return ix >= 0 && ix < cols && iy >= 0 && iy < rows; }

  /// Cell indices of a world point; false when outside the grid.
  bool index_of(double x, double y, int& ix, int& iy) const;
  Eigen::Vector2d center_of(int ix, int iy) const;

  std::vector<Eigen::Vector2d> occupied_centers() const;
  size_t count(CellState s) const;
};

struct GridConfig {
  double resolution = 0.05;
  double band_low = -0.8;   // meters relative to the camera height
  double band_high = 0.5;
  double max_range = 12.0;  // points farther out are ignored
};

/// Projects one predicted depth map into a camera-centered local grid
/// (odd-sized, camera in the middle cell). Points inside the height band mark
/// occupied endpoints with free space ray-traced up to them; points below the
/// band are traversable floor, freeing the ray including the endpoint; points
/// above the band are ignored. Free tracing never overwrites occupied cells.
OccupancyGrid depth_to_local_grid(const DepthMap& depth, const GridConfig& cfg);

/// Continuous planar endpoints of a depth map in the camera frame, split the
/// way depth_to_local_grid treats them: in-band points are obstacles, points
/// below the band are traversable floor.
struct Scan {
  std::vector<Eigen::Vector2d> obstacles;
  std::vector<Eigen::Vector2d> floor;
};
Scan depth_to_scan(const DepthMap& depth, const GridConfig& cfg);

/// Planar pose (x, y, heading).
struct Pose2D {
  double x = 0.0, y = 0.0, theta = 0.0;

  Pose2D compose(const Pose2D& other) const;
  Pose2D inverse() const;
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const;
  static double wrap_angle(double a);
};

struct IcpConfig {
  int max_iterations = 25;
  double nn_gate = 0.3;              // meters, match rejection distance
  double min_inlier_fraction = 0.3;  // below this the estimate falls back to odometry
  double convergence_eps = 1e-6;
};

struct PoseEstimate {
  Pose2D pose;                  // pose of `cur` frame in `prev` frame
  bool from_icp = false;        // false: odometry fallback
  double inlier_fraction = 0.0;
  int iterations = 0;
};

/// Point-to-point 2D ICP between the occupied cells of two local grids,
/// initialized with the odometry delta. Falls back to odometry (flagged) when
/// either grid has no occupied cells or matching degenerates.
PoseEstimate estimate_pose(const OccupancyGrid& prev, const OccupancyGrid& cur,
                           const Pose2D& odometry, const IcpConfig& cfg = {});

/// Same ICP with continuous scan points as the source. Registering the raw
/// endpoints avoids the per-frame sub-cell offset a camera-centered raster
/// injects, which otherwise makes the estimate wander by up to half a cell.
PoseEstimate estimate_pose(const OccupancyGrid& ref, const std::vector<Eigen::Vector2d>& scan,
                           const Pose2D& odometry, const IcpConfig& cfg = {});

/// Fuses a local grid into the global one at the given world pose, growing
/// the global grid as needed. Precedence per cell: occupied > free > unknown.
void stitch_into(OccupancyGrid& global, const OccupancyGrid& local, const Pose2D& pose);

/// Fuses one scan into the global grid at the given world pose: obstacle
/// endpoints mark occupied cells, and the ray from the camera to each
/// endpoint frees the cells short of it (through it for floor points).
/// Transforming the continuous endpoints and rasterizing once keeps repeated
/// observations of the same surface in the same global cell; going through a
/// camera-centered raster first would add a second, pose-dependent
/// quantization of up to half a cell.
void stitch_scan(OccupancyGrid& global, const Scan& scan, const Pose2D& pose);

struct MapMetrics {
  double chamfer = 0.0;  // meters, symmetric mean NN distance between occupied cells
  double mae = 0.0;      // binarized occupancy, union extent
  double psnr = 0.0;     // +inf when identical
  double iou = 0.0;      // occupied cells
};

/// Requires equal resolutions and at least one occupied cell in each grid.
MapMetrics map_metrics(const OccupancyGrid& a, const OccupancyGrid& b);

/// Ground-truth occupancy of the scene in the mapping height band: cells
/// touched by wall or obstacle surfaces are occupied, the rest of the room
/// interior is free.
OccupancyGrid scene_occupancy_grid(const Scene& scene, const GridConfig& cfg,
                                   double camera_height);

struct TrajectorySpec {
  std::vector<AgentAction> actions;
  double forward_step = 0.25;  // meters
  double turn_deg = 10.0;      // degrees per turn action
  Pose2D start;
};

struct SlamConfig {
  GridConfig grid;
  IcpConfig icp;
  int width = 256;  // render width (height = width / 2)
  double camera_height = 1.0;
  double odom_sigma_xy = 0.0;     // odometry noise, meters per step
  double odom_sigma_theta = 0.0;  // radians per step
  double collision_clearance = 0.2;
  uint64_t seed = 0;
};

struct SlamResult {
  OccupancyGrid map;
  std::vector<Pose2D> estimated;     // one per rendered frame
  std::vector<Pose2D> ground_truth;
  std::vector<AgentLogEntry> log;    // executed actions with observed views
  int collisions = 0;
};

/// Render - predict - scan-match - stitch over a scripted trajectory.
/// Forward actions that would collide are skipped and counted. The first
/// frame anchors the estimate at the true start pose.
SlamResult run_slam(const Scene& scene, const DepthPredictor& predictor,
                    const TrajectorySpec& traj, const SlamConfig& cfg);

/// A random exploration whose forward motions are collision-free by
/// construction.
TrajectorySpec plan_exploration(const Scene& scene, int n_steps, const SlamConfig& cfg,
                                Rng& rng);

}  // namespace pancal
