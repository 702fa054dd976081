#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "pancal/types.hpp"

namespace pancal {

/// 8-bit RGB PNG with pinned encoder settings (filter NONE, zlib level 6,
/// no interlace) so identical pixel data always yields identical bytes.
void save_png(const std::filesystem::path& path, const Panorama& pano);
Panorama load_png(const std::filesystem::path& path);
std::vector<uint8_t> encode_png(const Panorama& pano);
Panorama decode_png(const uint8_t* data, size_t size);

/// Raw float depth format: magic "PDR1", uint32le width and height, then
/// width * height little-endian float32 row-major. Invalid pixels are NaN.
void save_depth(const std::filesystem::path& path, const DepthMap& depth);
DepthMap load_depth(const std::filesystem::path& path);
std::vector<uint8_t> encode_depth(const DepthMap& depth);
DepthMap decode_depth(const uint8_t* data, size_t size);

nlohmann::json pose_to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& j);

void save_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json load_json(const std::filesystem::path& path);

/// Grayscale PNG from a [0, 1] scalar field (row-major, w * h floats).
void save_gray_png(const std::filesystem::path& path, const std::vector<float>& values,
                   int width, int height);

}  // namespace pancal
