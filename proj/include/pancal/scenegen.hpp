#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "pancal/rng.hpp"
#include "pancal/types.hpp"

namespace pancal {

struct BoxObstacle {
  Eigen::Vector3d center;
  Eigen::Vector3d half;
  Eigen::Vector3f albedo;
  bool checker = true;
};

struct CylinderObstacle {
  double cx = 0.0, cy = 0.0;
  double radius = 0.3;
  double z0 = 0.0, z1 = 1.0;
  Eigen::Vector3f albedo;
  bool checker = true;
};

struct RayHit {
  double t = 0.0;
  Eigen::Vector3f color = Eigen::Vector3f::Zero();
  bool hit = false;
};

/// Closed rectangular room with axis-aligned box and vertical cylinder
/// obstacles. Interior spans x in [-w/2, w/2], y in [-d/2, d/2], z in [0, h].
/// All surfaces carry flat albedos, optionally checkered, so every render is
/// an exact analytic ray cast with no sampling noise.
class Scene {
 public:
  Scene(double width, double depth, double height);

  int id() const { return id_; }
  double room_width() const { return width_; }
  double room_depth() const { return depth_; }
  double room_height() const { return height_; }
  double checker_size() const { return checker_size_; }
  void set_checker_size(double s);

  void add_box(const BoxObstacle& box) { boxes_.push_back(box); }
  void add_cylinder(const CylinderObstacle& cyl) { cylinders_.push_back(cyl); }
  const std::vector<BoxObstacle>& boxes() const { return boxes_; }
  const std::vector<CylinderObstacle>& cylinders() const { return cylinders_; }

  /// Nearest surface along origin + t * dir (dir unit length). Always hits
  /// when the origin is inside the room.
  RayHit raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;

  /// True when `p` is inside the room interior, at least `margin` from every
  /// wall and obstacle surface.
  bool in_free_space(const Eigen::Vector3d& p, double margin = 0.05) const;

  nlohmann::json to_json() const;
  static Scene from_json(const nlohmann::json& j);

 private:
  static int next_id();

  double width_, depth_, height_;
  double checker_size_ = 0.5;
  std::vector<BoxObstacle> boxes_;
  std::vector<CylinderObstacle> cylinders_;
  int id_;
};

/// Anisotropic scaling of the scene by `scale_xy` along the anchor pose's
/// local x and y axes, about the anchor center. scale_xy = 1 is identity.
struct SceneScale {
  double scale_xy = 1.0;
  Pose anchor;
};

/// Renders the panorama and ground-truth radial depth seen from `pose`
/// (camera-to-world). With `scale`, the scaled scene is rendered instead;
/// rays that leave the scaled room's pre-image yield invalid depth pixels.
/// The returned image carries a RenderTag for downstream provenance.
std::pair<Panorama, DepthMap> render_panorama(const Scene& scene, const Pose& pose, int width,
                                              int height,
                                              const std::optional<SceneScale>& scale = {});

struct SceneGenConfig {
  double room_w_min = 3.5, room_w_max = 8.0;
  double room_d_min = 3.5, room_d_max = 8.0;
  double room_h_min = 2.4, room_h_max = 3.2;
  int min_boxes = 1, max_boxes = 4;
  int min_cylinders = 0, max_cylinders = 2;
  double checker_size = 0.5;
  double margin = 0.3;  // obstacle-to-obstacle and obstacle-to-wall clearance
};

/// Random room with pairwise-disjoint obstacles. Placement retries a bounded
/// number of times per obstacle; crowded configs may end up with fewer.
Scene generate_scene(const SceneGenConfig& cfg, Rng& rng);

/// A uniformly sampled camera position with free-space clearance.
/// Throws after too many rejected samples (over-crowded scene).
Eigen::Vector3d sample_camera_position(const Scene& scene, Rng& rng, double clearance = 0.3,
                                       double camera_height = 1.0);

}  // namespace pancal
