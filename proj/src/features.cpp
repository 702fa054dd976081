#include "pancal/features.hpp"

#include <algorithm>
#include <cmath>

#include "pancal/rng.hpp"

namespace pancal {

namespace {

std::vector<float> luminance(const Panorama& pano) {
  std::vector<float> lum(pano.pixel_count());
  for (size_t i = 0; i < lum.size(); ++i) {
    const float* px = &pano.rgb[i * 3];
    lum[i] = 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
  }
  return lum;
}

/// 3x3 box smoothing with horizontal wrap and row clamping.
std::vector<float> box3(const std::vector<float>& img, int w, int h) {
  std::vector<float> out(img.size());
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      float sum = 0.0f;
      for (int dv = -1; dv <= 1; ++dv) {
        const int sv = std::clamp(v + dv, 0, h - 1);
        for (int du = -1; du <= 1; ++du) {
          const int su = (u + du + w) % w;
          sum += img[static_cast<size_t>(sv) * w + su];
        }
      }
      out[static_cast<size_t>(v) * w + u] = sum / 9.0f;
    }
  }
  return out;
}

struct PatchPairs {
  std::array<int8_t, 512> du;
  std::array<int8_t, 512> dv;
};

/// Fixed comparison pattern, generated once from a pinned seed.
const PatchPairs& pair_table() {
  static const PatchPairs table = [] {
    PatchPairs t;
    Rng rng(0x70616972ULL);
    for (int i = 0; i < 512; ++i) {
      t.du[i] = static_cast<int8_t>(rng.uniform_index(27)) - 13;
      t.dv[i] = static_cast<int8_t>(rng.uniform_index(27)) - 13;
    }
    return t;
  }();
  return table;
}

}  // namespace

int hamming_distance(const std::array<uint64_t, 4>& a, const std::array<uint64_t, 4>& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += __builtin_popcountll(a[i] ^ b[i]);
  return d;
}

ImageFeatures extract_features(const Panorama& pano, const FeatureConfig& cfg) {
  const int w = pano.width, h = pano.height;
  const std::vector<float> lum = luminance(pano);

  // Central-difference gradients: horizontal wrap, vertical clamp.
  std::vector<float> gx(lum.size()), gy(lum.size());
  for (int v = 0; v < h; ++v) {
    const int vm = std::max(v - 1, 0), vp = std::min(v + 1, h - 1);
    for (int u = 0; u < w; ++u) {
      const int um = (u - 1 + w) % w, up = (u + 1) % w;
      const size_t i = static_cast<size_t>(v) * w + u;
      gx[i] = 0.5f * (lum[static_cast<size_t>(v) * w + up] - lum[static_cast<size_t>(v) * w + um]);
      gy[i] = 0.5f * (lum[static_cast<size_t>(vp) * w + u] - lum[static_cast<size_t>(vm) * w + u]);
    }
  }

  ImageFeatures out;

  // Global descriptor: 8 x 16 cells, 4 orientation bins weighted by magnitude.
  {
    constexpr int kRows = 8, kCols = 16, kBins = 4;
    Eigen::Matrix<double, GlobalDescriptor::kDim, 1> acc;
    acc.setZero();
    for (int v = 0; v < h; ++v) {
      const int cr = std::min(v * kRows / h, kRows - 1);
      for (int u = 0; u < w; ++u) {
        const size_t i = static_cast<size_t>(v) * w + u;
        const double mag = std::hypot(gx[i], gy[i]);
        if (mag < 1e-12) continue;
        const int cc = std::min(u * kCols / w, kCols - 1);
        double angle = std::atan2(gy[i], gx[i]);  // [-pi, pi]
        int bin = static_cast<int>(std::floor((angle + kPi) / (kPi / 2)));
        bin = std::clamp(bin, 0, kBins - 1);
        acc[(cr * kCols + cc) * kBins + bin] += mag;
      }
    }
    const double norm = acc.norm();
    if (norm < 1e-12) {
      // Featureless image: a fixed unit vector keeps the invariant.
      out.global.v.setConstant(1.0f / std::sqrt(static_cast<float>(GlobalDescriptor::kDim)));
    } else {
      out.global.v = (acc / norm).cast<float>();
    }
  }

  // Harris response on box-smoothed second-moment products.
  std::vector<float> a(lum.size()), b(lum.size()), c(lum.size());
  for (size_t i = 0; i < lum.size(); ++i) {
    a[i] = gx[i] * gx[i];
    b[i] = gy[i] * gy[i];
    c[i] = gx[i] * gy[i];
  }
  a = box3(a, w, h);
  b = box3(b, w, h);
  c = box3(c, w, h);
  std::vector<float> response(lum.size());
  float max_response = 0.0f;
  for (size_t i = 0; i < lum.size(); ++i) {
    const float det = a[i] * b[i] - c[i] * c[i];
    const float tr = a[i] + b[i];
    response[i] = det - 0.06f * tr * tr;
    max_response = std::max(max_response, response[i]);
  }

  if (max_response > 0.0f) {
    struct Candidate {
      float resp;
      int u, v;
    };
    std::vector<Candidate> candidates;
    const float threshold = static_cast<float>(cfg.min_response_ratio) * max_response;
    const int v_lo = cfg.row_margin, v_hi = h - cfg.row_margin;
    for (int v = v_lo; v < v_hi; ++v) {
      for (int u = 0; u < w; ++u) {
        const float r = response[static_cast<size_t>(v) * w + u];
        if (r < threshold) continue;
        bool is_max = true;
        for (int dv = -1; dv <= 1 && is_max; ++dv) {
          for (int du = -1; du <= 1; ++du) {
            if (du == 0 && dv == 0) continue;
            const int su = (u + du + w) % w;
            const int sv = std::clamp(v + dv, 0, h - 1);
            const float rn = response[static_cast<size_t>(sv) * w + su];
            // Strictly-greater neighbors suppress; equal responses keep the
            // lexicographically first pixel.
            if (rn > r || (rn == r && (sv < v || (sv == v && su < u)))) {
              is_max = false;
              break;
            }
          }
        }
        if (is_max) candidates.push_back({r, u, v});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& x,
                                                              const Candidate& y) {
      if (x.resp != y.resp) return x.resp > y.resp;
      if (x.v != y.v) return x.v < y.v;
      return x.u < y.u;
    });
    if (static_cast<int>(candidates.size()) > cfg.max_features) {
      candidates.resize(cfg.max_features);
    }

    const std::vector<float> smooth = box3(lum, w, h);
    const PatchPairs& pairs = pair_table();
    out.local.reserve(candidates.size());
    for (const auto& cand : candidates) {
      LocalFeature f;
      f.u = static_cast<float>(cand.u);
      f.v = static_cast<float>(cand.v);
      f.response = cand.resp;
      for (int bit = 0; bit < 256; ++bit) {
        const int ua = (cand.u + pairs.du[bit] + w) % w;
        const int va = std::clamp(cand.v + static_cast<int>(pairs.dv[bit]), 0, h - 1);
        const int ub = (cand.u + pairs.du[256 + bit] + w) % w;
        const int vb = std::clamp(cand.v + static_cast<int>(pairs.dv[256 + bit]), 0, h - 1);
        const float ia = smooth[static_cast<size_t>(va) * w + ua];
        const float ib = smooth[static_cast<size_t>(vb) * w + ub];
        if (ia < ib) f.descriptor[bit / 64] |= 1ull << (bit % 64);
      }
      out.local.push_back(f);
    }
  }
  return out;
}

std::vector<std::pair<int, int>> match_features(const std::vector<LocalFeature>& a,
                                                const std::vector<LocalFeature>& b,
                                                double ratio) {
  std::vector<std::pair<int, int>> matches;
  if (a.empty() || b.empty()) return matches;

  const auto best_two = [](const std::array<uint64_t, 4>& desc,
                           const std::vector<LocalFeature>& pool) {
    int best = -1, best_d = 1 << 30, second_d = 1 << 30;
    for (size_t i = 0; i < pool.size(); ++i) {
      const int d = hamming_distance(desc, pool[i].descriptor);
      if (d < best_d) {
        second_d = best_d;
        best_d = d;
        best = static_cast<int>(i);
      } else if (d < second_d) {
        second_d = d;
      }
    }
    return std::tuple<int, int, int>(best, best_d, second_d);
  };

  std::vector<int> b_best(b.size(), -1);
  for (size_t j = 0; j < b.size(); ++j) {
    b_best[j] = std::get<0>(best_two(b[j].descriptor, a));
  }
  for (size_t i = 0; i < a.size(); ++i) {
    const auto [j, d1, d2] = best_two(a[i].descriptor, b);
    if (j < 0 || b_best[j] != static_cast<int>(i)) continue;
    if (static_cast<double>(d1) >= ratio * static_cast<double>(d2)) continue;
    matches.emplace_back(static_cast<int>(i), j);
  }
  return matches;
}

}  // namespace pancal
