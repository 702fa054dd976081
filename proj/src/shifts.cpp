#include "pancal/shifts.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "pancal/geometry.hpp"

namespace pancal {

namespace {

float clamp01(double x) { return static_cast<float>(std::min(std::max(x, 0.0), 1.0)); }

Panorama photometric(const Panorama& pano, const std::function<double(double, int)>& fn) {
  Panorama out = pano;
  for (size_t i = 0; i < out.rgb.size(); ++i) {
    out.rgb[i] = clamp01(fn(out.rgb[i], static_cast<int>(i % 3)));
  }
  return out;
}

}  // namespace

Panorama apply_shift(const Panorama& pano, ImageShift shift, Rng& rng) {
  switch (shift) {
    case ImageShift::LowLight:
      return photometric(pano, [](double x, int) { return 0.75 * x; });
    case ImageShift::WhiteBalance: {
      constexpr double gains[3] = {0.7, 0.9, 0.8};
      return photometric(pano, [&](double x, int c) { return gains[c] * x; });
    }
    case ImageShift::Gamma:
      return photometric(pano, [](double x, int) { return std::pow(x, 1.5); });
    case ImageShift::Speckle: {
      const double std_dev = std::sqrt(0.06);
      return photometric(pano, [&](double x, int) { return x + x * std_dev * rng.normal(); });
    }
    case ImageShift::Gaussian: {
      const double std_dev = std::sqrt(0.005);
      return photometric(pano, [&](double x, int) { return x + std_dev * rng.normal(); });
    }
    case ImageShift::SaltPepper: {
      Panorama out = pano;
      const size_t n_pixels = out.pixel_count();
      const size_t n_hit = static_cast<size_t>(std::lround(0.005 * static_cast<double>(n_pixels)));
      // Partial Fisher-Yates over pixel indices: distinct targets.
      std::vector<uint32_t> idx(n_pixels);
      for (size_t i = 0; i < n_pixels; ++i) idx[i] = static_cast<uint32_t>(i);
      for (size_t i = 0; i < n_hit; ++i) {
        const size_t j = i + rng.uniform_index(n_pixels - i);
        std::swap(idx[i], idx[j]);
      }
      for (size_t i = 0; i < n_hit; ++i) {
        const float value = i < n_hit / 2 ? 1.0f : 0.0f;
        float* px = &out.rgb[static_cast<size_t>(idx[i]) * 3];
        px[0] = px[1] = px[2] = value;
      }
      return out;
    }
    case ImageShift::Rotation: {
      const double yaw = rng.uniform(-kPi, kPi);
      const double pitch = rng.uniform(-kPi / 8, kPi / 8);
      const double roll = rng.uniform(-kPi / 8, kPi / 8);
      const Eigen::Matrix3d rot =
          (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
           Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
           Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
              .toRotationMatrix();
      return rotate_camera(pano, rot);
    }
  }
  throw std::domain_error("unknown image shift");
}

const std::vector<ImageShift>& all_shifts() {
  static const std::vector<ImageShift> shifts = {
      ImageShift::LowLight, ImageShift::WhiteBalance, ImageShift::Gamma,   ImageShift::Speckle,
      ImageShift::Gaussian, ImageShift::SaltPepper,   ImageShift::Rotation};
  return shifts;
}

std::string shift_name(ImageShift shift) {
  switch (shift) {
    case ImageShift::LowLight:
      return "low_light";
    case ImageShift::WhiteBalance:
      return "white_balance";
    case ImageShift::Gamma:
      return "gamma";
    case ImageShift::Speckle:
      return "speckle";
    case ImageShift::Gaussian:
      return "gaussian";
    case ImageShift::SaltPepper:
      return "salt_pepper";
    case ImageShift::Rotation:
      return "rotation";
  }
  throw std::domain_error("unknown image shift");
}

ImageShift shift_from_name(const std::string& name) {
  for (ImageShift s : all_shifts()) {
    if (shift_name(s) == name) return s;
  }
  throw std::domain_error("unknown image shift: " + name);
}

}  // namespace pancal
