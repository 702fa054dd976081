#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "pancal/io.hpp"
#include "pancal/rng.hpp"
#include "pancal/scenegen.hpp"
#include "test_util.hpp"

using namespace pancal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "pancal_io_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("png round trip is exact on 8-bit data") {
    TempDir tmp;
    Panorama pano = Panorama::create(16, 8);
    Rng rng(7);
    for (float& c : pano.rgb) c = std::round(rng.uniform() * 255.0) / 255.0f;
    save_png(tmp.path / "a.png", pano);
    const Panorama back = load_png(tmp.path / "a.png");
    REQUIRE(back.width == 16);
    REQUIRE(back.height == 8);
    for (size_t i = 0; i < pano.rgb.size(); ++i) {
      CHECK(std::abs(back.rgb[i] - pano.rgb[i]) <= 0.5f / 255.0f);
    }
  }

  TEST_CASE("png encoding is byte-stable") {
    auto scene = testutil::make_test_scene();
    const auto [pano, depth] = render_panorama(*scene, testutil::camera_at(0, 0, 1.0), 64, 32);
    CHECK(encode_png(pano) == encode_png(pano));
  }

  TEST_CASE("depth round trip preserves values and validity") {
    TempDir tmp;
    DepthMap d = DepthMap::create(12, 6);
    Rng rng(3);
    for (int i = 0; i < 72; ++i) {
      d.depth[i] = static_cast<float>(rng.uniform(0.1, 9.0));
      if (i % 7 == 0) d.valid[i] = 0;
    }
    save_depth(tmp.path / "d.pdr", d);
    const DepthMap back = load_depth(tmp.path / "d.pdr");
    REQUIRE(back.width == 12);
    for (int i = 0; i < 72; ++i) {
      CHECK(back.valid[i] == d.valid[i]);
      if (d.valid[i]) CHECK(back.depth[i] == d.depth[i]);  // bit exact via float32
    }
    const std::vector<uint8_t> bytes = encode_depth(d);
    CHECK(bytes.size() == 4 + 4 + 4 + 72 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PDR1");
    CHECK_THROWS(decode_depth(bytes.data(), 8));
  }

  TEST_CASE("pose json round trip") {
    const Pose pose = Pose::yaw(1.1, Eigen::Vector3d(0.5, -2.0, 1.25));
    const Pose back = pose_from_json(pose_to_json(pose));
    CHECK(back.rotation.isApprox(pose.rotation, 1e-15));
    CHECK(back.translation.isApprox(pose.translation, 1e-15));
    nlohmann::json bad = pose_to_json(pose);
    bad["rotation"][0] = 5.0;
    CHECK_THROWS(pose_from_json(bad));
  }

  TEST_CASE("scene json round trip preserves geometry") {
    auto scene = testutil::make_test_scene();
    const Scene back = Scene::from_json(scene->to_json());
    CHECK(back.room_width() == scene->room_width());
    CHECK(back.boxes().size() == scene->boxes().size());
    CHECK(back.cylinders().size() == scene->cylinders().size());
    const Eigen::Vector3d origin(0.2, 0.1, 1.0);
    const Eigen::Vector3d dir = Eigen::Vector3d(0.3, 0.8, -0.1).normalized();
    CHECK(back.raycast(origin, dir).t == doctest::Approx(scene->raycast(origin, dir).t));
  }
}
