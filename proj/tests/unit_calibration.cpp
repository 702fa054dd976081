#include <doctest.h>

#include <cmath>

#include "pancal/calibration.hpp"
#include "pancal/scenegen.hpp"
#include "test_util.hpp"

using namespace pancal;

TEST_SUITE("calibration") {
  TEST_CASE("augmentation picks the branch the mean depth dictates") {
    LossConfig cfg;
    Rng rng(3);

    // Far scene: stretch toward the band with k in [sigma^2, sigma].
    auto big = testutil::make_empty_scene(9.5, 9.5, 2.8);
    ScenePredictor far_mock(big);
    const auto far_view = render_panorama(*big, testutil::camera_at(0, 0, 1.4), 64, 32);
    REQUIRE(far_view.second.mean_valid() > 2.5);
    const Panorama far_aug = augment_panorama(far_mock, far_view.first, cfg, rng);
    REQUIRE(far_aug.tag.has_value());
    CHECK(far_aug.tag->scale_xy >= 0.64 - 1e-9);
    CHECK(far_aug.tag->scale_xy <= 0.8 + 1e-9);

    // In-band scene: novel view, translation within the perturbation budget.
    auto mid = testutil::make_empty_scene(4.0, 3.6, 2.6);
    ScenePredictor mid_mock(mid);
    const auto mid_view = render_panorama(*mid, testutil::camera_at(0, 0, 1.3), 64, 32);
    const double mean = mid_view.second.mean_valid();
    REQUIRE(mean > 1.0);
    REQUIRE(mean < 2.5);
    const Panorama mid_aug = augment_panorama(mid_mock, mid_view.first, cfg, rng);
    REQUIRE(mid_aug.tag.has_value());
    CHECK(mid_aug.tag->scale_xy == doctest::Approx(1.0));
    const double moved =
        (mid_aug.tag->camera.translation - mid_view.first.tag->camera.translation).norm();
    CHECK(moved > 1e-6);
    CHECK(moved <= std::sqrt(3.0) * cfg.perturb.max_translation + 1e-9);
  }

  TEST_CASE("training set is image-major and deterministic") {
    auto scene = testutil::make_test_scene();
    ScenePredictor mock(scene);
    const auto v1 = render_panorama(*scene, testutil::camera_at(0.2, 0, 1.0), 64, 32);
    const auto v2 = render_panorama(*scene, testutil::camera_at(-0.3, 0.4, 1.0), 64, 32);
    LossConfig cfg;
    Rng rng_a(9), rng_b(9);
    const auto set_a = make_training_set(mock, {v1.first, v2.first}, 3, cfg, rng_a);
    const auto set_b = make_training_set(mock, {v1.first, v2.first}, 3, cfg, rng_b);
    REQUIRE(set_a.size() == 6);
    for (size_t i = 0; i < 6; ++i) CHECK(set_a[i].rgb == set_b[i].rgb);

    Rng rng_c(9);
    const auto originals = make_training_set(mock, {v1.first, v2.first}, 0, cfg, rng_c);
    REQUIRE(originals.size() == 2);
    CHECK(originals[0].rgb == v1.first.rgb);
    CHECK_THROWS(make_training_set(mock, {v1.first}, -1, cfg, rng_c));
  }

  TEST_CASE("offline calibration moves the scale toward the corruption inverse") {
    auto scene = testutil::make_empty_scene(7.0, 6.5, 2.8);
    CorruptionSpec spec;
    spec.scale = 1.2;
    auto base = std::make_shared<ScenePredictor>(scene, spec);
    CalibratedPredictor calib(base);

    const auto view = render_panorama(*scene, testutil::camera_at(0.3, 0.2, 1.4), 64, 32);
    LossConfig loss_cfg;
    loss_cfg.chamfer_samples = 1024;
    CalibConfig cfg;
    cfg.steps = 8;
    cfg.batch = 2;
    cfg.n_aug = 0;
    cfg.seed = 5;
    Rng rng(5);
    const auto train = make_training_set(*base, {view.first}, 4, loss_cfg, rng);
    const CalibResult result = calibrate_offline(calib, train, cfg, loss_cfg);
    REQUIRE(result.loss_trace.size() == 8);
    CHECK(result.params.log_scale < 0.0);  // moving toward 1/1.2
    CHECK(std::exp(result.params.log_scale) >= cfg.min_scale);
    CHECK(result.params.gamma >= cfg.min_gamma);
    CHECK(result.params.gamma <= cfg.max_gamma);
    CHECK(calib.params().log_scale == result.params.log_scale);
  }

  TEST_CASE("online calibration emits pre-update predictions") {
    auto scene = testutil::make_test_scene();
    CorruptionSpec spec;
    spec.scale = 1.3;
    auto base = std::make_shared<ScenePredictor>(scene, spec);
    CalibratedPredictor calib(base);
    std::vector<Panorama> stream;
    for (int i = 0; i < 3; ++i) {
      stream.push_back(
          render_panorama(*scene, testutil::camera_at(0.1 * i, 0, 1.0), 64, 32).first);
    }
    LossConfig loss_cfg;
    loss_cfg.chamfer_samples = 512;
    CalibConfig cfg;
    cfg.seed = 2;
    const auto steps = calibrate_online(calib, stream, cfg, loss_cfg);
    REQUIRE(steps.size() == 3);
    // First frame's prediction is made before any update: identity params.
    const DepthMap raw = base->predict(stream[0]);
    REQUIRE(steps[0].prediction.depth.size() == raw.depth.size());
    for (size_t i = 0; i < raw.depth.size(); ++i) {
      CHECK(steps[0].prediction.depth[i] == doctest::Approx(raw.depth[i]).epsilon(1e-6));
    }
    // Parameters did move by the end.
    CHECK(steps.back().params.log_scale != 0.0);
  }

  TEST_CASE("navigation calibration needs enough forward frames") {
    auto scene = testutil::make_test_scene();
    auto base = std::make_shared<ScenePredictor>(scene);
    CalibratedPredictor calib(base);
    const auto view = render_panorama(*scene, testutil::camera_at(0, 0, 1.0), 64, 32);
    std::vector<AgentLogEntry> log;
    log.push_back({AgentAction::TurnLeft, view.first});
    log.push_back({AgentAction::Forward, view.first});
    LossConfig loss_cfg;
    CalibConfig cfg;
    CHECK_THROWS_WITH_AS(calibrate_from_navigation(calib, log, 3, cfg, loss_cfg),
                         "navigation log has 1 forward frames, need 3", std::runtime_error);

    log.push_back({AgentAction::Forward, view.first});
    log.push_back({AgentAction::Forward, view.first});
    cfg.steps = 2;
    cfg.n_aug = 1;
    loss_cfg.chamfer_samples = 256;
    const CalibResult result = calibrate_from_navigation(calib, log, 3, cfg, loss_cfg);
    CHECK(result.loss_trace.size() == 2);
  }

  TEST_CASE("step cap applies to navigation calibration") {
    auto scene = testutil::make_empty_scene(4.0, 3.6, 2.6);
    auto base = std::make_shared<ScenePredictor>(scene);
    CalibratedPredictor calib(base);
    const auto view = render_panorama(*scene, testutil::camera_at(0, 0, 1.3), 16, 8);
    std::vector<AgentLogEntry> log(1, {AgentAction::Forward, view.first});
    LossConfig loss_cfg;
    loss_cfg.chamfer_samples = 32;
    CalibConfig cfg;
    cfg.steps = 1000;  // must be capped to 300
    cfg.n_aug = 0;
    cfg.batch = 1;
    cfg.lr = 1e-6;
    const CalibResult result = calibrate_from_navigation(calib, log, 1, cfg, loss_cfg);
    CHECK(result.loss_trace.size() == 300);
  }
}
