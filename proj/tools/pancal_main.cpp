// Command-line surface: binds the library into reproducible experiment
// recipes. Every subcommand writes its artifacts plus a manifest.json under
// --out-dir; all randomness derives from --seed.

#include <CLI11.hpp>
#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pancal/calibration.hpp"
#include "pancal/geometry.hpp"
#include "pancal/io.hpp"
#include "pancal/localization.hpp"
#include "pancal/losses.hpp"
#include "pancal/mapping.hpp"
#include "pancal/metrics.hpp"
#include "pancal/predictor.hpp"
#include "pancal/scenegen.hpp"
#include "pancal/shifts.hpp"
#include "pancal/stretch.hpp"

namespace fs = std::filesystem;
using namespace pancal;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string join_csv(const std::vector<std::string>& cells) {
  std::string row;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) row += ',';
    row += cells[i];
  }
  return row;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Run context: seed, output directory, and the manifest ledger.
struct Ctx {
  uint64_t seed = 0;
  int threads = 0;  // recorded in the manifest; current build is single-threaded
  fs::path out_dir = "out";
  std::string command;
  std::vector<std::string> argv;
  std::vector<std::string> outputs;

  fs::path out(const std::string& name) {
    outputs.push_back(name);
    return out_dir / name;
  }

  void write_manifest() {
    json m;
    m["command"] = command;
    m["argv"] = argv;
    m["seed"] = seed;
    m["threads"] = threads;
    m["version"] = kVersion;
    m["outputs"] = outputs;
    save_json(out_dir / "manifest.json", m);
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_csv(Ctx& ctx, const std::string& name, const std::string& header,
               const std::vector<std::vector<std::string>>& rows, bool echo = false) {
  std::string text = header + "\n";
  for (const auto& row : rows) text += join_csv(row) + "\n";
  write_text(ctx.out(name), text);
  if (echo) std::cout << text;
}

std::shared_ptr<Scene> load_scene(const fs::path& path) {
  return std::make_shared<Scene>(Scene::from_json(load_json(path)));
}

std::shared_ptr<Scene> obtain_scene(Ctx& ctx, const std::string& scene_path, bool save_generated) {
  if (!scene_path.empty()) return load_scene(scene_path);
  Rng rng(hash_combine(ctx.seed, 0x7363656eULL));  // scene stream
  auto scene = std::make_shared<Scene>(generate_scene(SceneGenConfig{}, rng));
  if (save_generated) save_json(ctx.out("scene.json"), scene->to_json());
  return scene;
}

std::vector<Pose> load_pose_list(const fs::path& path) {
  const json j = load_json(path);
  const json& arr = j.is_array() ? j : j.at("poses");
  std::vector<Pose> poses;
  for (const json& p : arr) poses.push_back(pose_from_json(p));
  return poses;
}

Pose sample_view_pose(const Scene& scene, Rng& rng, double camera_height) {
  const Eigen::Vector3d pos = sample_camera_position(scene, rng, 0.3, camera_height);
  return Pose::yaw(rng.uniform(0.0, kTwoPi), pos);
}

std::vector<Pose> sampled_or_loaded_poses(const Scene& scene, const std::string& poses_path,
                                          int count, uint64_t seed, double camera_height) {
  if (!poses_path.empty()) return load_pose_list(poses_path);
  Rng rng(hash_combine(seed, 0x706f7365ULL));  // pose stream
  std::vector<Pose> poses;
  for (int i = 0; i < count; ++i) poses.push_back(sample_view_pose(scene, rng, camera_height));
  return poses;
}

// --predictor grammar: gt | corrupt:<spec> | calibrated:<params.json> |
// command:<shell>. calibrated wraps the scene mock with the --corrupt spec as
// its base, mirroring "calibrate the corrupted model, then evaluate it".
std::shared_ptr<const DepthPredictor> make_predictor(const std::string& flag,
                                                     const std::shared_ptr<Scene>& scene,
                                                     const std::string& base_corrupt) {
  if (flag == "gt") return std::make_shared<ScenePredictor>(scene);
  if (flag.rfind("corrupt:", 0) == 0) {
    return std::make_shared<ScenePredictor>(scene, CorruptionSpec::parse(flag.substr(8)));
  }
  if (flag.rfind("calibrated:", 0) == 0) {
    auto base = std::make_shared<ScenePredictor>(scene, CorruptionSpec::parse(base_corrupt));
    const CorrectionParams params = correction_from_json(load_json(flag.substr(11)));
    return std::make_shared<CalibratedPredictor>(base, params);
  }
  if (flag.rfind("command:", 0) == 0) {
    return std::make_shared<SubprocessPredictor>(flag.substr(8));
  }
  throw std::runtime_error("unknown --predictor: " + flag);
}

void write_depth_heatmap(const fs::path& path, const DepthMap& depth) {
  float max_d = 0.0f;
  for (int i = 0; i < depth.width * depth.height; ++i)
    if (depth.valid[static_cast<size_t>(i)]) max_d = std::max(max_d, depth.depth[i]);
  std::vector<float> gray(depth.depth.size(), 0.0f);
  if (max_d > 0.0f) {
    for (size_t i = 0; i < gray.size(); ++i)
      gray[i] = depth.valid[i] ? depth.depth[i] / max_d : 0.0f;
  }
  save_gray_png(path, gray, depth.width, depth.height);
}

// Occupancy grid rendering: unknown = gray, free = white, occupied = black;
// row 0 of the image is the maximum-y edge of the grid.
void write_grid_png(const fs::path& path, const OccupancyGrid& grid) {
  std::vector<float> gray(static_cast<size_t>(grid.cols) * grid.rows, 0.5f);
  for (int iy = 0; iy < grid.rows; ++iy) {
    for (int ix = 0; ix < grid.cols; ++ix) {
      const CellState s = grid.at(ix, iy);
      const float v = s == CellState::Free ? 1.0f : (s == CellState::Occupied ? 0.0f : 0.5f);
      gray[static_cast<size_t>(grid.rows - 1 - iy) * grid.cols + ix] = v;
    }
  }
  save_gray_png(path, gray, grid.cols, grid.rows);
}

std::vector<std::string> metrics_cells(const DepthMetrics& m) {
  return {fmt_g(m.mae),      fmt_g(m.abs_rel),  fmt_g(m.sq_rel),
          fmt_g(m.rmse),     fmt_g(m.rmse_log), fmt_g(m.inlier_1),
          fmt_g(m.inlier_2), fmt_g(m.inlier_3), std::to_string(m.n_pixels),
          std::to_string(m.n_excluded_nonpositive)};
}

constexpr const char* kMetricsHeader =
    "mae,abs_rel,sq_rel,rmse,rmse_log,inlier_1,inlier_2,inlier_3,n_pixels,n_excluded";

DepthMetrics mean_metrics(const std::vector<DepthMetrics>& all) {
  DepthMetrics m;
  for (const DepthMetrics& x : all) {
    m.mae += x.mae;
    m.abs_rel += x.abs_rel;
    m.sq_rel += x.sq_rel;
    m.rmse += x.rmse;
    m.rmse_log += x.rmse_log;
    m.inlier_1 += x.inlier_1;
    m.inlier_2 += x.inlier_2;
    m.inlier_3 += x.inlier_3;
    m.n_pixels += x.n_pixels;
    m.n_excluded_nonpositive += x.n_excluded_nonpositive;
  }
  const double n = std::max<size_t>(all.size(), 1);
  m.mae /= n;
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse /= n;
  m.rmse_log /= n;
  m.inlier_1 /= n;
  m.inlier_2 /= n;
  m.inlier_3 /= n;
  return m;
}

std::string action_name(AgentAction a) {
  switch (a) {
    case AgentAction::Forward:
      return "forward";
    case AgentAction::TurnLeft:
      return "turn_left";
    case AgentAction::TurnRight:
      return "turn_right";
  }
  return "unknown";
}

AgentAction action_from_name(const std::string& name) {
  if (name == "forward") return AgentAction::Forward;
  if (name == "turn_left") return AgentAction::TurnLeft;
  if (name == "turn_right") return AgentAction::TurnRight;
  throw std::runtime_error("unknown action: " + name);
}

TrajectorySpec trajectory_from_json(const json& j) {
  TrajectorySpec traj;
  const json& actions = j.is_array() ? j : j.at("actions");
  for (const json& a : actions) traj.actions.push_back(action_from_name(a.get<std::string>()));
  if (j.is_object()) {
    if (j.contains("forward_step")) traj.forward_step = j.at("forward_step").get<double>();
    if (j.contains("turn_deg")) traj.turn_deg = j.at("turn_deg").get<double>();
    if (j.contains("start")) {
      const json& s = j.at("start");
      traj.start = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    }
  }
  return traj;
}

bool pointgoal_forward_clear(const Scene& scene, const Pose2D& pose, double step, double clearance,
                             double camera_height) {
  for (double t : {0.5, 1.0}) {
    const Eigen::Vector3d p(pose.x + t * step * std::cos(pose.theta),
                            pose.y + t * step * std::sin(pose.theta), camera_height);
    if (!scene.in_free_space(p, clearance)) return false;
  }
  return true;
}

// Greedy point-goal navigation: turn toward the goal, step forward when
// clear, sidestep obstacles by turning right.
TrajectorySpec plan_pointgoal(const Scene& scene, int max_steps, const SlamConfig& cfg, Rng& rng) {
  TrajectorySpec traj;
  const Eigen::Vector3d start = sample_camera_position(scene, rng, 0.4, cfg.camera_height);
  const Eigen::Vector3d goal3 = sample_camera_position(scene, rng, 0.4, cfg.camera_height);
  const Eigen::Vector2d goal(goal3.x(), goal3.y());
  traj.start = {start.x(), start.y(), rng.uniform(0.0, kTwoPi)};
  const double turn = traj.turn_deg * kPi / 180.0;
  Pose2D pose = traj.start;
  for (int i = 0; i < max_steps; ++i) {
    const Eigen::Vector2d to_goal = goal - Eigen::Vector2d(pose.x, pose.y);
    if (to_goal.norm() < 0.3) break;
    const double diff = Pose2D::wrap_angle(std::atan2(to_goal.y(), to_goal.x()) - pose.theta);
    AgentAction action;
    if (std::abs(diff) > 0.5 * turn) {
      action = diff > 0 ? AgentAction::TurnLeft : AgentAction::TurnRight;
    } else if (pointgoal_forward_clear(scene, pose, traj.forward_step, cfg.collision_clearance,
                                       cfg.camera_height)) {
      action = AgentAction::Forward;
    } else {
      action = AgentAction::TurnRight;
    }
    switch (action) {
      case AgentAction::Forward:
        pose.x += traj.forward_step * std::cos(pose.theta);
        pose.y += traj.forward_step * std::sin(pose.theta);
        break;
      case AgentAction::TurnLeft:
        pose.theta = Pose2D::wrap_angle(pose.theta + turn);
        break;
      case AgentAction::TurnRight:
        pose.theta = Pose2D::wrap_angle(pose.theta - turn);
        break;
    }
    traj.actions.push_back(action);
  }
  return traj;
}

// ---- subcommand option blocks ----

struct SynthOpts {
  std::string scene, poses;
  int count = 4;
  int width = 256;
  double camera_height = 1.0;
  bool heatmaps = false;
};

void run_synth(Ctx& ctx, const SynthOpts& o) {
  auto scene = obtain_scene(ctx, o.scene, true);
  if (!o.scene.empty()) save_json(ctx.out("scene.json"), scene->to_json());
  const std::vector<Pose> poses =
      sampled_or_loaded_poses(*scene, o.poses, o.count, ctx.seed, o.camera_height);
  char name[64];
  for (size_t i = 0; i < poses.size(); ++i) {
    const auto [pano, depth] = render_panorama(*scene, poses[i], o.width, o.width / 2);
    std::snprintf(name, sizeof(name), "pano_%03zu.png", i);
    save_png(ctx.out(name), pano);
    std::snprintf(name, sizeof(name), "depth_%03zu.pdr", i);
    save_depth(ctx.out(name), depth);
    std::snprintf(name, sizeof(name), "pose_%03zu.json", i);
    save_json(ctx.out(name), pose_to_json(poses[i]));
    if (o.heatmaps) {
      std::snprintf(name, sizeof(name), "heatmap_%03zu.png", i);
      write_depth_heatmap(ctx.out(name), depth);
    }
  }
  ctx.write_manifest();
}

struct CalibrateOpts {
  std::string scene, corrupt = "";
  std::vector<std::string> images, poses;
  int auto_render = 1;
  int width = 128;
  double camera_height = 1.0;
  std::string profile = "offline";
  int steps = 60, batch = 4, n_aug = 10, n_fwd = 25, nav_steps = 120;
  double lr = 0.05;
  int chamfer_samples = 8192;
  bool fit_gamma = false, fit_band_bias = false;
};

void run_calibrate(Ctx& ctx, const CalibrateOpts& o) {
  auto scene = obtain_scene(ctx, o.scene, true);
  auto base = std::make_shared<ScenePredictor>(scene, CorruptionSpec::parse(o.corrupt));
  CalibratedPredictor calib(base);

  CalibConfig cfg;
  cfg.steps = o.steps;
  cfg.lr = o.lr;
  cfg.batch = o.batch;
  cfg.n_aug = o.n_aug;
  cfg.fit_gamma = o.fit_gamma;
  cfg.fit_band_bias = o.fit_band_bias;
  cfg.seed = ctx.seed;
  LossConfig loss_cfg;
  loss_cfg.chamfer_samples = o.chamfer_samples;
  loss_cfg.perturb.seed = ctx.seed;

  std::vector<Panorama> images;
  if (!o.images.empty()) {
    if (o.images.size() != o.poses.size()) {
      throw std::runtime_error("--images and --poses must pair up");
    }
    for (size_t i = 0; i < o.images.size(); ++i) {
      Panorama pano = load_png(o.images[i]);
      const Pose pose = pose_from_json(load_json(o.poses[i]));
      pano.tag = RenderTag{scene->id(), pose, 1.0, pose, false};
      images.push_back(std::move(pano));
    }
  } else if (o.profile == "offline" || o.profile == "online") {
    Rng rng(hash_combine(ctx.seed, 0x706f7365ULL));
    for (int i = 0; i < o.auto_render; ++i) {
      const Pose pose = sample_view_pose(*scene, rng, o.camera_height);
      images.push_back(render_panorama(*scene, pose, o.width, o.width / 2).first);
    }
  }

  std::vector<std::vector<std::string>> rows;
  if (o.profile == "offline") {
    Rng aug_rng(hash_combine(ctx.seed, 0x617567ULL));
    const std::vector<Panorama> train =
        make_training_set(*base, images, cfg.n_aug, loss_cfg, aug_rng);
    const CalibResult result = calibrate_offline(calib, train, cfg, loss_cfg);
    for (size_t i = 0; i < result.loss_trace.size(); ++i)
      rows.push_back({std::to_string(i), fmt_g(result.loss_trace[i])});
    write_csv(ctx, "trace.csv", "step,loss", rows);
    save_json(ctx.out("params.json"), correction_to_json(result.params));
  } else if (o.profile == "online") {
    const std::vector<OnlineStep> steps = calibrate_online(calib, images, cfg, loss_cfg);
    for (size_t i = 0; i < steps.size(); ++i) {
      std::vector<std::string> row = {std::to_string(i), fmt_g(steps[i].loss),
                                      fmt_g(steps[i].params.log_scale),
                                      fmt_g(steps[i].params.gamma)};
      for (double b : steps[i].params.band_bias) row.push_back(fmt_g(b));
      rows.push_back(std::move(row));
    }
    write_csv(ctx, "trace.csv", "frame,loss,log_scale,gamma,bias0,bias1,bias2,bias3", rows);
    save_json(ctx.out("params.json"), correction_to_json(calib.params()));
  } else if (o.profile == "nav-explore" || o.profile == "nav-pointgoal") {
    SlamConfig slam_cfg;
    slam_cfg.width = o.width;
    slam_cfg.camera_height = o.camera_height;
    slam_cfg.seed = ctx.seed;
    Rng rng(hash_combine(ctx.seed, 0x6e6176ULL));
    const TrajectorySpec traj = o.profile == "nav-explore"
                                    ? plan_exploration(*scene, o.nav_steps, slam_cfg, rng)
                                    : plan_pointgoal(*scene, o.nav_steps, slam_cfg, rng);
    const SlamResult slam = run_slam(*scene, *base, traj, slam_cfg);
    const CalibResult result = calibrate_from_navigation(calib, slam.log, o.n_fwd, cfg, loss_cfg);
    for (size_t i = 0; i < result.loss_trace.size(); ++i)
      rows.push_back({std::to_string(i), fmt_g(result.loss_trace[i])});
    write_csv(ctx, "trace.csv", "step,loss", rows);
    save_json(ctx.out("params.json"), correction_to_json(result.params));
  } else {
    throw std::runtime_error("unknown --profile: " + o.profile);
  }
  ctx.write_manifest();
}

struct EvalDepthOpts {
  std::vector<std::string> pred, gt;
  std::string scene, predictor = "gt", corrupt = "";
  int count = 4;
  int width = 256;
  double camera_height = 1.0;
};

void run_eval_depth(Ctx& ctx, const EvalDepthOpts& o) {
  std::vector<DepthMetrics> all;
  std::vector<std::vector<std::string>> rows;
  if (!o.pred.empty()) {
    if (o.pred.size() != o.gt.size()) throw std::runtime_error("--pred and --gt must pair up");
    for (size_t i = 0; i < o.pred.size(); ++i) {
      const DepthMetrics m = depth_metrics(load_depth(o.pred[i]), load_depth(o.gt[i]));
      all.push_back(m);
      std::vector<std::string> row = {std::to_string(i)};
      const auto cells = metrics_cells(m);
      row.insert(row.end(), cells.begin(), cells.end());
      rows.push_back(std::move(row));
    }
  } else {
    if (o.scene.empty() && o.predictor.rfind("command:", 0) != 0)
      throw std::runtime_error("eval-depth needs --pred/--gt pairs or --scene");
    auto scene = obtain_scene(ctx, o.scene, true);
    auto predictor = make_predictor(o.predictor, scene, o.corrupt);
    Rng rng(hash_combine(ctx.seed, 0x706f7365ULL));
    for (int i = 0; i < o.count; ++i) {
      const Pose pose = sample_view_pose(*scene, rng, o.camera_height);
      const auto [pano, gt_depth] = render_panorama(*scene, pose, o.width, o.width / 2);
      const DepthMetrics m = depth_metrics(predictor->predict(pano), gt_depth);
      all.push_back(m);
      std::vector<std::string> row = {std::to_string(i)};
      const auto cells = metrics_cells(m);
      row.insert(row.end(), cells.begin(), cells.end());
      rows.push_back(std::move(row));
    }
  }
  DepthMetrics mean = mean_metrics(all);
  std::vector<std::string> mean_row = {"mean"};
  const auto cells = metrics_cells(mean);
  mean_row.insert(mean_row.end(), cells.begin(), cells.end());
  rows.push_back(std::move(mean_row));
  write_csv(ctx, "metrics.csv", std::string("image,") + kMetricsHeader, rows, true);
  ctx.write_manifest();
}

struct LossesOpts {
  std::string scene, predictor = "gt", corrupt = "";
  int count = 1;
  int width = 128;
  double camera_height = 1.0;
  int chamfer_samples = 8192;
};

void run_losses(Ctx& ctx, const LossesOpts& o) {
  auto scene = obtain_scene(ctx, o.scene, true);
  auto predictor = make_predictor(o.predictor, scene, o.corrupt);
  LossConfig cfg;
  cfg.chamfer_samples = o.chamfer_samples;
  cfg.perturb.seed = ctx.seed;
  Rng pose_rng(hash_combine(ctx.seed, 0x706f7365ULL));
  Rng loss_rng(hash_combine(ctx.seed, 0x6c6f7373ULL));
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < o.count; ++i) {
    const Pose pose = sample_view_pose(*scene, pose_rng, o.camera_height);
    const Panorama pano = render_panorama(*scene, pose, o.width, o.width / 2).first;
    const LossReport report = total_loss(*predictor, pano, cfg, loss_rng);
    rows.push_back(
        {fmt_g(report.stretch), fmt_g(report.chamfer), fmt_g(report.normal), fmt_g(report.total)});
  }
  write_csv(ctx, "losses.csv", "stretch,chamfer,normal,total", rows, true);
  ctx.write_manifest();
}

struct AugmentOpts {
  std::string scene, corrupt = "";
  std::string image, pose;
  int n_aug = 10;
  int width = 128;
  double camera_height = 1.0;
};

void run_augment(Ctx& ctx, const AugmentOpts& o) {
  auto scene = obtain_scene(ctx, o.scene, true);
  auto base = std::make_shared<ScenePredictor>(scene, CorruptionSpec::parse(o.corrupt));
  Panorama pano = [&] {
    if (!o.image.empty()) {
      Panorama p = load_png(o.image);
      if (o.pose.empty()) throw std::runtime_error("--image needs --pose");
      const Pose pose = pose_from_json(load_json(o.pose));
      p.tag = RenderTag{scene->id(), pose, 1.0, pose, false};
      return p;
    }
    Rng rng(hash_combine(ctx.seed, 0x706f7365ULL));
    return render_panorama(*scene, sample_view_pose(*scene, rng, o.camera_height), o.width,
                           o.width / 2)
        .first;
  }();
  LossConfig cfg;
  cfg.perturb.seed = ctx.seed;
  Rng rng(hash_combine(ctx.seed, 0x617567ULL));
  const std::vector<Panorama> augs = make_training_set(*base, {pano}, o.n_aug, cfg, rng);
  save_png(ctx.out("original.png"), pano);
  char name[64];
  for (size_t i = 0; i < augs.size(); ++i) {
    std::snprintf(name, sizeof(name), "aug_%03zu.png", i);
    save_png(ctx.out(name), augs[i]);
  }
  ctx.write_manifest();
}

struct MapOpts {
  std::string scene, trajectory, predictor = "gt", corrupt = "";
  int explore = 100;
  int width = 256;
  double resolution = 0.05;
  double camera_height = 1.0;
  double odom_noise = 0.0, odom_noise_theta = 0.0;
};

void run_map(Ctx& ctx, const MapOpts& o) {
  auto scene = obtain_scene(ctx, o.scene, true);
  auto predictor = make_predictor(o.predictor, scene, o.corrupt);
  SlamConfig cfg;
  cfg.grid.resolution = o.resolution;
  cfg.width = o.width;
  cfg.camera_height = o.camera_height;
  cfg.odom_sigma_xy = o.odom_noise;
  cfg.odom_sigma_theta = o.odom_noise_theta;
  cfg.seed = ctx.seed;

  TrajectorySpec traj;
  if (!o.trajectory.empty()) {
    traj = trajectory_from_json(load_json(o.trajectory));
  } else {
    Rng rng(hash_combine(ctx.seed, 0x6e6176ULL));
    traj = plan_exploration(*scene, o.explore, cfg, rng);
  }

  const SlamResult slam = run_slam(*scene, *predictor, traj, cfg);
  const OccupancyGrid gt = scene_occupancy_grid(*scene, cfg.grid, cfg.camera_height);
  const MapMetrics m = map_metrics(slam.map, gt);

  write_grid_png(ctx.out("map.png"), slam.map);
  write_grid_png(ctx.out("map_gt.png"), gt);

  const Pose2D& est_last = slam.estimated.back();
  const Pose2D& gt_last = slam.ground_truth.back();
  const double final_err = std::hypot(est_last.x - gt_last.x, est_last.y - gt_last.y);
  write_csv(ctx, "metrics.csv", "chamfer,mae,psnr,iou,collisions,final_pose_err",
            {{fmt_g(m.chamfer), fmt_g(m.mae), fmt_g(m.psnr), fmt_g(m.iou),
              std::to_string(slam.collisions), fmt_g(final_err)}},
            true);

  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < slam.estimated.size(); ++i) {
    const std::string action = i == 0 ? "start" : action_name(slam.log[i - 1].action);
    rows.push_back({std::to_string(i), action, fmt_g(slam.estimated[i].x),
                    fmt_g(slam.estimated[i].y), fmt_g(slam.estimated[i].theta),
                    fmt_g(slam.ground_truth[i].x), fmt_g(slam.ground_truth[i].y),
                    fmt_g(slam.ground_truth[i].theta)});
  }
  write_csv(ctx, "trajectory.csv", "frame,action,est_x,est_y,est_theta,gt_x,gt_y,gt_theta", rows);
  ctx.write_manifest();
}

struct LocalizeOpts {
  std::string scene, reference, queries, predictor = "gt", corrupt = "";
  int n_queries = 20;
  int n_t = 100, n_r = 8, top_k = 5;
  int width = 256;
  double camera_height = 1.0;
  double acc_t = 0.3, acc_r = 5.0;
};

void run_localize(Ctx& ctx, const LocalizeOpts& o) {
  auto scene = obtain_scene(ctx, o.scene, true);
  auto predictor = make_predictor(o.predictor, scene, o.corrupt);

  Rng rng(hash_combine(ctx.seed, 0x6c6f63ULL));
  const Pose ref_pose = o.reference.empty() ? sample_view_pose(*scene, rng, o.camera_height)
                                            : pose_from_json(load_json(o.reference));
  const Panorama ref_pano = render_panorama(*scene, ref_pose, o.width, o.width / 2).first;

  LocalizeConfig cfg;
  cfg.n_translations = o.n_t;
  cfg.n_rotations = o.n_r;
  cfg.retrieval_top_k = o.top_k;
  const ReferenceMap map = build_reference_map(ref_pano, *predictor, cfg, rng);

  std::vector<Pose> query_poses;
  if (!o.queries.empty()) {
    query_poses = load_pose_list(o.queries);
  } else {
    for (int i = 0; i < o.n_queries; ++i)
      query_poses.push_back(sample_view_pose(*scene, rng, o.camera_height));
  }

  std::vector<std::vector<std::string>> rows;
  std::vector<double> t_errs, r_errs;
  int n_ok = 0, n_acc = 0;
  for (size_t i = 0; i < query_poses.size(); ++i) {
    const Panorama query = render_panorama(*scene, query_poses[i], o.width, o.width / 2).first;
    const LocalizeResult result = localize_query(query, map, cfg, rng);
    const Pose truth = ref_pose.inverse().compose(query_poses[i]);
    double t_err = std::numeric_limits<double>::quiet_NaN();
    double r_err = std::numeric_limits<double>::quiet_NaN();
    if (result.status == LocalizeStatus::Ok || result.status == LocalizeStatus::TooFewInliers) {
      std::tie(t_err, r_err) = pose_error(result.pose, truth);
    }
    if (result.status == LocalizeStatus::Ok) {
      ++n_ok;
      t_errs.push_back(t_err);
      r_errs.push_back(r_err);
      if (t_err <= o.acc_t && r_err <= o.acc_r) ++n_acc;
    }
    rows.push_back({std::to_string(i), fmt_g(t_err), fmt_g(r_err),
                    std::to_string(result.n_inliers), localize_status_name(result.status)});
  }
  write_csv(ctx, "results.csv", "query,t_err,r_err,inliers,status", rows, true);
  write_csv(ctx, "summary.csv", "n_queries,n_ok,median_t_err,median_r_err,accuracy",
            {{std::to_string(query_poses.size()), std::to_string(n_ok), fmt_g(median_of(t_errs)),
              fmt_g(median_of(r_errs)),
              fmt_g(query_poses.empty() ? 0.0
                                        : static_cast<double>(n_acc) / query_poses.size())}},
            true);
  ctx.write_manifest();
}

struct DomainsOpts {
  std::string scene, predictor = "gt", corrupt = "";
  int count = 4;
  int width = 128;
  double camera_height = 1.0;
};

void run_domains(Ctx& ctx, const DomainsOpts& o) {
  auto scene = obtain_scene(ctx, o.scene, true);
  auto predictor = make_predictor(o.predictor, scene, o.corrupt);
  ScenePredictor oracle(scene);

  Rng pose_rng(hash_combine(ctx.seed, 0x706f7365ULL));
  std::vector<std::pair<Panorama, DepthMap>> views;
  for (int i = 0; i < o.count; ++i) {
    const Pose pose = sample_view_pose(*scene, pose_rng, o.camera_height);
    views.push_back(render_panorama(*scene, pose, o.width, o.width / 2));
  }

  std::vector<std::vector<std::string>> rows;
  auto eval_shift = [&](const std::string& name, std::optional<ImageShift> shift) {
    Rng shift_rng(hash_combine(ctx.seed, 0x736866ULL));
    std::vector<DepthMetrics> all;
    for (const auto& [pano, gt_depth] : views) {
      const Panorama shifted = shift ? apply_shift(pano, *shift, shift_rng) : pano;
      // The reference is the ground truth for the view the predictor actually
      // saw (rotation shifts change the camera).
      const DepthMap ref = shift ? oracle.ground_truth(shifted) : gt_depth;
      all.push_back(depth_metrics(predictor->predict(shifted), ref));
    }
    const DepthMetrics m = mean_metrics(all);
    std::vector<std::string> row = {name};
    const auto cells = metrics_cells(m);
    row.insert(row.end(), cells.begin(), cells.end());
    rows.push_back(std::move(row));
  };

  eval_shift("none", std::nullopt);
  for (ImageShift shift : all_shifts()) eval_shift(shift_name(shift), shift);
  write_csv(ctx, "metrics.csv", std::string("shift,") + kMetricsHeader, rows, true);
  ctx.write_manifest();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"test-time calibration of panoramic depth via geometric self-consistency"};
  app.require_subcommand(1);
  app.fallthrough();

  Ctx ctx;
  for (int i = 0; i < argc; ++i) ctx.argv.push_back(argv[i]);
  std::string out_dir = "out";
  app.add_option("--seed", ctx.seed, "global random seed");
  app.add_option("--threads", ctx.threads, "parallelism bound (recorded; current build is serial)");
  app.add_option("--out-dir", out_dir, "artifact directory");

  auto synth = std::make_shared<SynthOpts>();
  CLI::App* sc_synth = app.add_subcommand("synth", "render panoramas + depth from a scene");
  sc_synth->add_option("--scene", synth->scene, "scene JSON (default: generate one)");
  sc_synth->add_option("--poses", synth->poses, "pose list JSON (default: sample --count)");
  sc_synth->add_option("--count", synth->count, "poses to sample");
  sc_synth->add_option("--width", synth->width, "panorama width (height = width/2)");
  sc_synth->add_option("--camera-height", synth->camera_height, "camera z");
  sc_synth->add_flag("--heatmaps", synth->heatmaps, "also write depth heatmap PNGs");

  auto calibrate = std::make_shared<CalibrateOpts>();
  CLI::App* sc_cal = app.add_subcommand("calibrate", "fit correction parameters");
  sc_cal->add_option("--scene", calibrate->scene, "scene JSON (default: generate one)");
  sc_cal->add_option("--corrupt", calibrate->corrupt, "mock corruption spec");
  sc_cal->add_option("--images", calibrate->images, "training panoramas (PNG)");
  sc_cal->add_option("--poses", calibrate->poses, "pose JSON per training image");
  sc_cal->add_option("--auto-render", calibrate->auto_render, "render this many training views");
  sc_cal->add_option("--width", calibrate->width, "render width");
  sc_cal->add_option("--camera-height", calibrate->camera_height, "camera z");
  sc_cal->add_option("--profile", calibrate->profile, "offline|online|nav-explore|nav-pointgoal");
  sc_cal->add_option("--steps", calibrate->steps, "descent steps");
  sc_cal->add_option("--lr", calibrate->lr, "learning rate");
  sc_cal->add_option("--batch", calibrate->batch, "images per step");
  sc_cal->add_option("--n-aug", calibrate->n_aug, "augmentations per image");
  sc_cal->add_option("--n-fwd", calibrate->n_fwd, "forward frames used by nav profiles");
  sc_cal->add_option("--nav-steps", calibrate->nav_steps, "trajectory length for nav profiles");
  sc_cal->add_option("--chamfer-samples", calibrate->chamfer_samples, "chamfer subsample size");
  sc_cal->add_flag("--fit-gamma", calibrate->fit_gamma, "also fit the gamma correction");
  sc_cal->add_flag("--fit-band-bias", calibrate->fit_band_bias, "also fit per-band depth biases");

  auto evald = std::make_shared<EvalDepthOpts>();
  CLI::App* sc_eval = app.add_subcommand("eval-depth", "depth error metrics");
  sc_eval->add_option("--pred", evald->pred, "predicted depth files (PDR1)");
  sc_eval->add_option("--gt", evald->gt, "reference depth files (PDR1)");
  sc_eval->add_option("--scene", evald->scene, "scene JSON (default: generate one)");
  sc_eval->add_option("--predictor", evald->predictor,
                      "gt|corrupt:<spec>|calibrated:<params.json>|command:<shell>");
  sc_eval->add_option("--corrupt", evald->corrupt, "base corruption for calibrated");
  sc_eval->add_option("--count", evald->count, "evaluation views");
  sc_eval->add_option("--width", evald->width, "render width");
  sc_eval->add_option("--camera-height", evald->camera_height, "camera z");

  auto losses = std::make_shared<LossesOpts>();
  CLI::App* sc_losses = app.add_subcommand("losses", "self-consistency losses per view");
  sc_losses->add_option("--scene", losses->scene, "scene JSON (default: generate one)");
  sc_losses->add_option("--predictor", losses->predictor, "predictor spec");
  sc_losses->add_option("--corrupt", losses->corrupt, "base corruption for calibrated");
  sc_losses->add_option("--count", losses->count, "views");
  sc_losses->add_option("--width", losses->width, "render width");
  sc_losses->add_option("--camera-height", losses->camera_height, "camera z");
  sc_losses->add_option("--chamfer-samples", losses->chamfer_samples, "chamfer subsample size");

  auto augment = std::make_shared<AugmentOpts>();
  CLI::App* sc_aug = app.add_subcommand("augment", "write augmented training panoramas");
  sc_aug->add_option("--scene", augment->scene, "scene JSON (default: generate one)");
  sc_aug->add_option("--corrupt", augment->corrupt, "mock corruption spec");
  sc_aug->add_option("--image", augment->image, "input panorama PNG");
  sc_aug->add_option("--pose", augment->pose, "pose JSON for --image");
  sc_aug->add_option("--n-aug", augment->n_aug, "augmentations");
  sc_aug->add_option("--width", augment->width, "render width");
  sc_aug->add_option("--camera-height", augment->camera_height, "camera z");

  auto mapo = std::make_shared<MapOpts>();
  CLI::App* sc_map = app.add_subcommand("map", "occupancy-grid SLAM over a trajectory");
  sc_map->add_option("--scene", mapo->scene, "scene JSON (default: generate one)");
  sc_map->add_option("--trajectory", mapo->trajectory, "trajectory JSON (default: explore)");
  sc_map->add_option("--explore", mapo->explore, "exploration steps when no trajectory");
  sc_map->add_option("--predictor", mapo->predictor, "predictor spec");
  sc_map->add_option("--corrupt", mapo->corrupt, "base corruption for calibrated");
  sc_map->add_option("--width", mapo->width, "render width");
  sc_map->add_option("--resolution", mapo->resolution, "grid resolution (m)");
  sc_map->add_option("--camera-height", mapo->camera_height, "camera z");
  sc_map->add_option("--odom-noise", mapo->odom_noise, "odometry xy noise sigma (m)");
  sc_map->add_option("--odom-noise-theta", mapo->odom_noise_theta, "odometry angle sigma (rad)");

  auto loco = std::make_shared<LocalizeOpts>();
  CLI::App* sc_loc = app.add_subcommand("localize", "map-free localization experiment");
  sc_loc->add_option("--scene", loco->scene, "scene JSON (default: generate one)");
  sc_loc->add_option("--reference", loco->reference, "reference pose JSON (default: sample)");
  sc_loc->add_option("--queries", loco->queries, "query pose list JSON (default: sample)");
  sc_loc->add_option("--n-queries", loco->n_queries, "queries to sample");
  sc_loc->add_option("--predictor", loco->predictor, "predictor spec");
  sc_loc->add_option("--corrupt", loco->corrupt, "base corruption for calibrated");
  sc_loc->add_option("--n-t", loco->n_t, "reference pose translations");
  sc_loc->add_option("--n-r", loco->n_r, "reference pose yaw bins");
  sc_loc->add_option("--top-k", loco->top_k, "retrieval candidates");
  sc_loc->add_option("--width", loco->width, "render width");
  sc_loc->add_option("--camera-height", loco->camera_height, "camera z");
  sc_loc->add_option("--acc-t", loco->acc_t, "accuracy threshold, meters");
  sc_loc->add_option("--acc-r", loco->acc_r, "accuracy threshold, degrees");

  auto domains = std::make_shared<DomainsOpts>();
  CLI::App* sc_dom = app.add_subcommand("domains", "depth metrics under image shifts");
  sc_dom->add_option("--scene", domains->scene, "scene JSON (default: generate one)");
  sc_dom->add_option("--predictor", domains->predictor, "predictor spec");
  sc_dom->add_option("--corrupt", domains->corrupt, "base corruption for calibrated");
  sc_dom->add_option("--count", domains->count, "views per shift");
  sc_dom->add_option("--width", domains->width, "render width");
  sc_dom->add_option("--camera-height", domains->camera_height, "camera z");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ctx.out_dir = out_dir;
    fs::create_directories(ctx.out_dir);
    if (sc_synth->parsed()) {
      ctx.command = "synth";
      run_synth(ctx, *synth);
    } else if (sc_cal->parsed()) {
      ctx.command = "calibrate";
      run_calibrate(ctx, *calibrate);
    } else if (sc_eval->parsed()) {
      ctx.command = "eval-depth";
      run_eval_depth(ctx, *evald);
    } else if (sc_losses->parsed()) {
      ctx.command = "losses";
      run_losses(ctx, *losses);
    } else if (sc_aug->parsed()) {
      ctx.command = "augment";
      run_augment(ctx, *augment);
    } else if (sc_map->parsed()) {
      ctx.command = "map";
      run_map(ctx, *mapo);
    } else if (sc_loc->parsed()) {
      ctx.command = "localize";
      run_localize(ctx, *loco);
    } else if (sc_dom->parsed()) {
      ctx.command = "domains";
      run_domains(ctx, *domains);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
