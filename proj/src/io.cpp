#include "pancal/io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace pancal {

namespace {

uint8_t to_byte(float x) {
  const float v = std::min(std::max(x, 0.0f), 1.0f);
  return static_cast<uint8_t>(std::lround(v * 255.0f));
}

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_noop_flush(png_structp) {}

struct PngReadCursor {
  const uint8_t* data;
  size_t size;
  size_t offset = 0;
};

void png_consume(png_structp png, png_bytep out, png_size_t length) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->size) png_error(png, "png stream truncated");
  std::memcpy(out, cur->data + cur->offset, length);
  cur->offset += length;
}

std::vector<uint8_t> encode_png_bytes(const std::vector<uint8_t>& bytes, int width, int height,
                                      int channels) {
  std::vector<uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png encode failed");
  }
  png_set_write_fn(png, &out, png_append, png_noop_flush);
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  const int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, width, height, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int v = 0; v < height; ++v) {
    rows[v] = const_cast<png_bytep>(&bytes[static_cast<size_t>(v) * width * channels]);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("short write to " + path.string());
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const auto size = is.tellg();
  is.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  is.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!is) throw std::runtime_error("short read from " + path.string());
  return bytes;
}

}  // namespace

std::vector<uint8_t> encode_png(const Panorama& pano) {
  std::vector<uint8_t> bytes(pano.pixel_count() * 3);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(pano.rgb[i]);
  return encode_png_bytes(bytes, pano.width, pano.height, 3);
}

void save_png(const std::filesystem::path& path, const Panorama& pano) {
  write_file(path, encode_png(pano));
}

void save_gray_png(const std::filesystem::path& path, const std::vector<float>& values,
                   int width, int height) {
  if (values.size() != static_cast<size_t>(width) * height) {
    throw std::domain_error("gray image size mismatch");
  }
  std::vector<uint8_t> bytes(values.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(values[i]);
  write_file(path, encode_png_bytes(bytes, width, height, 1));
}

Panorama decode_png(const uint8_t* data, size_t size) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png decode failed");
  }
  PngReadCursor cursor{data, size};
  png_set_read_fn(png, &cursor, png_consume);
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unexpected png channel count");
  }

  std::vector<uint8_t> bytes(static_cast<size_t>(width) * height * 3);
  std::vector<png_bytep> rows(height);
  for (int v = 0; v < height; ++v) {
    rows[v] = &bytes[static_cast<size_t>(v) * width * 3];
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Panorama pano = Panorama::create(width, height);
  for (size_t i = 0; i < bytes.size(); ++i) pano.rgb[i] = bytes[i] / 255.0f;
  return pano;
}

Panorama load_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_png(bytes.data(), bytes.size());
}

namespace {

void put_u32le(std::vector<uint8_t>& out, uint32_t x) {
  out.push_back(static_cast<uint8_t>(x));
  out.push_back(static_cast<uint8_t>(x >> 8));
  out.push_back(static_cast<uint8_t>(x >> 16));
  out.push_back(static_cast<uint8_t>(x >> 24));
}

uint32_t get_u32le(const uint8_t* b) {
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

std::vector<uint8_t> encode_depth(const DepthMap& depth) {
  static_assert(std::numeric_limits<float>::is_iec559);
  std::vector<uint8_t> out;
  out.reserve(12 + depth.depth.size() * sizeof(float));
  out.insert(out.end(), {'P', 'D', 'R', '1'});
  put_u32le(out, static_cast<uint32_t>(depth.width));
  put_u32le(out, static_cast<uint32_t>(depth.height));
  for (size_t i = 0; i < depth.depth.size(); ++i) {
    const float f = depth.valid[i] ? depth.depth[i] : std::numeric_limits<float>::quiet_NaN();
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32le(out, bits);
  }
  return out;
}

DepthMap decode_depth(const uint8_t* data, size_t size) {
  if (size < 12 || std::memcmp(data, "PDR1", 4) != 0) {
    throw std::runtime_error("bad depth payload magic");
  }
  const uint32_t width = get_u32le(data + 4);
  const uint32_t height = get_u32le(data + 8);
  if (width == 0 || height == 0 || width > (1u << 16) || height > (1u << 16)) {
    throw std::runtime_error("bad depth payload header");
  }
  const size_t n = static_cast<size_t>(width) * height;
  if (size != 12 + n * sizeof(float)) throw std::runtime_error("depth payload size mismatch");
  DepthMap depth = DepthMap::create(static_cast<int>(width), static_cast<int>(height));
  for (size_t i = 0; i < n; ++i) {
    const uint32_t bits = get_u32le(data + 12 + i * 4);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    if (std::isnan(f)) {
      depth.valid[i] = 0;
      depth.depth[i] = 0.0f;
    } else {
      depth.depth[i] = f;
    }
  }
  return depth;
}

void save_depth(const std::filesystem::path& path, const DepthMap& depth) {
  write_file(path, encode_depth(depth));
}

DepthMap load_depth(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_depth(bytes.data(), bytes.size());
}

nlohmann::json pose_to_json(const Pose& pose) {
  nlohmann::json j;
  auto& r = j["rotation"] = nlohmann::json::array();
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) r.push_back(pose.rotation(row, col));
  auto& t = j["translation"] = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) t.push_back(pose.translation[i]);
  return j;
}

Pose pose_from_json(const nlohmann::json& j) {
  Pose pose;
  const auto& r = j.at("rotation");
  const auto& t = j.at("translation");
  if (r.size() != 9 || t.size() != 3) throw std::runtime_error("malformed pose json");
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) pose.rotation(row, col) = r[row * 3 + col].get<double>();
  for (int i = 0; i < 3; ++i) pose.translation[i] = t[i].get<double>();
  if (!pose.is_orthonormal(1e-6)) throw std::runtime_error("pose rotation is not orthonormal");
  return pose;
}

void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << j.dump(2) << "\n";
}

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  is >> j;
  return j;
}

}  // namespace pancal
