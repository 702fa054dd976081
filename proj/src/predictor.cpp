#include "pancal/predictor.hpp"

#include <cmath>
#include <sstream>

#include "pancal/geometry.hpp"
#include "pancal/rng.hpp"

namespace pancal {

int band_of_row(int v, int height, int n_bands) {
  if (v < 0 || v >= height) throw std::domain_error("row outside image");
  if (n_bands <= 0) throw std::domain_error("need at least one band");
  // Colatitude is linear in the row, so equal-colatitude bands are equal row
  // spans.
  const int band = static_cast<int>(static_cast<int64_t>(v) * n_bands / height);
  return std::min(band, n_bands - 1);
}

DepthMap apply_correction(const DepthMap& base, const CorrectionParams& params) {
  if (params.band_bias.empty()) throw std::domain_error("band_bias must be non-empty");
  DepthMap out = base;
  const double scale = std::exp(params.log_scale);
  const int n_bands = static_cast<int>(params.band_bias.size());
  for (int v = 0; v < base.height; ++v) {
    const double bias = params.band_bias[band_of_row(v, base.height, n_bands)];
    for (int u = 0; u < base.width; ++u) {
      const size_t idx = static_cast<size_t>(v) * base.width + u;
      if (!base.valid[idx]) continue;
      const double d = std::max(static_cast<double>(base.depth[idx]),
                                static_cast<double>(kMinDepth));
      out.depth[idx] =
          std::max(static_cast<float>(scale * std::pow(d, params.gamma) + bias), kMinDepth);
    }
  }
  return out;
}

nlohmann::json correction_to_json(const CorrectionParams& params) {
  return {{"log_scale", params.log_scale},
          {"gamma", params.gamma},
          {"band_bias", params.band_bias}};
}

CorrectionParams correction_from_json(const nlohmann::json& j) {
  CorrectionParams p;
  p.log_scale = j.at("log_scale").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.band_bias = j.at("band_bias").get<std::vector<double>>();
  if (p.band_bias.empty()) throw std::runtime_error("band_bias must be non-empty");
  return p;
}

CorruptionSpec CorruptionSpec::parse(const std::string& text) {
  CorruptionSpec spec;
  if (text.empty() || text == "gt") return spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::domain_error("corruption entry needs key=value: " + item);
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    if (key == "scale") {
      spec.scale = std::stod(val);
    } else if (key == "gamma") {
      spec.gamma = std::stod(val);
    } else if (key == "bias") {
      spec.latitude_bias = std::stod(val);
    } else if (key == "noise") {
      spec.noise_std = std::stod(val);
    } else if (key == "seed") {
      spec.noise_seed = std::stoull(val);
    } else if (key == "band") {
      const auto colon = val.find(':');
      if (colon == std::string::npos) throw std::domain_error("band needs lo:hi");
      spec.comfort_band = {{std::stod(val.substr(0, colon)), std::stod(val.substr(colon + 1))}};
    } else {
      throw std::domain_error("unknown corruption key: " + key);
    }
  }
  if (spec.scale <= 0.0) throw std::domain_error("corruption scale must be positive");
  return spec;
}

std::string CorruptionSpec::to_string() const {
  std::ostringstream os;
  os << "scale=" << scale << ",gamma=" << gamma << ",bias=" << latitude_bias
     << ",noise=" << noise_std;
  if (comfort_band) os << ",band=" << (*comfort_band)[0] << ":" << (*comfort_band)[1];
  return os.str();
}

ScenePredictor::ScenePredictor(std::shared_ptr<const Scene> scene, CorruptionSpec spec)
    : scene_(std::move(scene)), spec_(spec) {
  if (!scene_) throw std::domain_error("scene predictor needs a scene");
}

namespace {

uint64_t tag_hash(const RenderTag& tag, int width, int height) {
  uint64_t h = 0x7d3a9c4b5e6f8a21ULL;
  h = hash_combine(h, static_cast<uint64_t>(tag.scene_id));
  h = hash_pose(h, tag.camera);
  h = hash_double(h, tag.scale_xy);
  h = hash_pose(h, tag.anchor);
  h = hash_combine(h, tag.mirrored ? 1 : 0);
  h = hash_combine(h, (static_cast<uint64_t>(width) << 32) | static_cast<uint64_t>(height));
  return h;
}

}  // namespace

const DepthMap& ScenePredictor::cast_depth(const RenderTag& tag, int width, int height) const {
  const uint64_t key = tag_hash(tag, width, height);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  Pose camera = tag.camera;
  Pose anchor = tag.anchor;
  if (tag.mirrored) {
    camera = mirror_conjugate(camera);
    anchor = mirror_conjugate(anchor);
  }
  std::optional<SceneScale> scale;
  if (std::abs(tag.scale_xy - 1.0) > 1e-12) scale = SceneScale{tag.scale_xy, anchor};
  DepthMap depth = render_panorama(*scene_, camera, width, height, scale).second;
  if (tag.mirrored) depth = flip_horizontal(depth);

  constexpr size_t kCacheCap = 96;
  if (cache_order_.size() >= kCacheCap) {
    cache_.erase(cache_order_.front());
    cache_order_.pop_front();
  }
  cache_order_.push_back(key);
  return cache_.emplace(key, std::move(depth)).first->second;
}

DepthMap ScenePredictor::ground_truth(const Panorama& image) const {
  if (!image.tag) throw std::runtime_error("image carries no render provenance");
  if (image.tag->scene_id != scene_->id()) {
    throw std::runtime_error("image provenance does not match this predictor's scene");
  }
  return cast_depth(*image.tag, image.width, image.height);
}

DepthMap ScenePredictor::predict(const Panorama& image) const {
  const DepthMap& gt = [&]() -> const DepthMap& {
    if (!image.tag) throw std::runtime_error("image carries no render provenance");
    if (image.tag->scene_id != scene_->id()) {
      throw std::runtime_error("image provenance does not match this predictor's scene");
    }
    return cast_depth(*image.tag, image.width, image.height);
  }();

  DepthMap out = gt;
  double strength = 1.0;
  if (spec_.comfort_band) {
    const double mean = gt.mean_valid();
    const double lo = (*spec_.comfort_band)[0], hi = (*spec_.comfort_band)[1];
    const double outside = std::max({lo - mean, mean - hi, 0.0});
    strength = std::min(outside / std::max(spec_.band_ramp, 1e-9), 1.0);
  }
  const double scale = 1.0 + strength * (spec_.scale - 1.0);
  const double gamma = 1.0 + strength * (spec_.gamma - 1.0);
  const double bias = strength * spec_.latitude_bias;

  Rng noise(hash_combine(tag_hash(*image.tag, image.width, image.height), spec_.noise_seed));
  const bool noisy = spec_.noise_std > 0.0;
  for (int v = 0; v < out.height; ++v) {
    const double cos_lat = std::cos(colat_of_row(v, out.height));
    for (int u = 0; u < out.width; ++u) {
      const size_t idx = static_cast<size_t>(v) * out.width + u;
      const double n = noisy ? spec_.noise_std * noise.normal() : 0.0;
      if (!out.valid[idx]) {
        continue;  // noise stream still advances identically: draw above
      }
      const double g = static_cast<double>(out.depth[idx]);
      const double d = scale * std::pow(std::max(g, static_cast<double>(kMinDepth)), gamma) +
                       bias * cos_lat + n;
      out.depth[idx] = std::max(static_cast<float>(d), kMinDepth);
    }
  }
  return out;
}

CalibratedPredictor::CalibratedPredictor(std::shared_ptr<const DepthPredictor> base,
                                         CorrectionParams params)
    : base_(std::move(base)), params_(std::move(params)) {
  if (!base_) throw std::domain_error("calibrated predictor needs a base predictor");
  if (params_.band_bias.empty()) throw std::domain_error("band_bias must be non-empty");
}

DepthMap CalibratedPredictor::predict(const Panorama& image) const {
  return apply_correction(base_->predict(image), params_);
}

void CalibratedPredictor::set_params(CorrectionParams params) {
  if (params.band_bias.empty()) throw std::domain_error("band_bias must be non-empty");
  params_ = std::move(params);
}

}  // namespace pancal
