// Copyright 2026 The ddx Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ddx/distortions.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

namespace ddx {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "gwn", "blur", "sp", "quantization", "jpeg", "lowpass", "denoise", "fnoise", "pristine"};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

DistortionClass class_from_code(int code) {
  if (code < 0 || code >= kNumClasses) throw Error("unknown class code " + std::to_string(code));
  return static_cast<DistortionClass>(code);
}

std::string_view class_name(DistortionClass c) { return kClassNames.at(class_code(c)); }

std::optional<DistortionClass> parse_class(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return static_cast<DistortionClass>(i);
  }
  return std::nullopt;
}

LevelGrid level_grid(DistortionClass c) {
  auto grid = [](double a, double b, double c, bool integer) {
    return LevelGrid{{a, b, c}, std::min({a, b, c}), std::max({a, b, c}), integer};
  };
  switch (c) {
    case DistortionClass::kGwn:
      return grid(0.0125, 0.025, 0.05, false);
    case DistortionClass::kGaussianBlur:
      return grid(1.5, 3.0, 6.0, false);
    case DistortionClass::kSaltPepper:
      return grid(0.0125, 0.025, 0.05, false);
    case DistortionClass::kQuantization:
      return grid(16, 8, 4, true);
    case DistortionClass::kJpeg:
      return grid(20, 10, 5, true);
    case DistortionClass::kLowPass:
      return grid(0.3, 0.1, 0.03, false);
    case DistortionClass::kDenoise:
      return grid(0.04, 0.06, 0.08, false);
    case DistortionClass::kFNoise:
      return grid(10.0, 5.0, 2.5, false);
    case DistortionClass::kPristine:
      break;
  }
  throw Error("pristine class has no level grid");
}

void validate_spec(const DistortionSpec& spec) {
  if (spec.cls == DistortionClass::kPristine) return;
  const LevelGrid g = level_grid(spec.cls);
  constexpr double kTol = 1e-9;
  if (!(spec.param >= g.min - kTol && spec.param <= g.max + kTol)) {
    throw Error("parameter " + std::to_string(spec.param) + " outside legal range of " +
                std::string(class_name(spec.cls)));
  }
  if (g.integer_valued && spec.param != std::round(spec.param)) {
    throw Error(std::string(class_name(spec.cls)) + " parameter must be an integer");
  }
}

ImageF apply_gwn(const ImageF& img, double variance, RngStream& rng) {
  if (!(variance > 0.0)) throw Error("GWN variance must be positive");
  const double sd = std::sqrt(variance);
  ImageF out = img;
  for (double& v : out.data()) v = clamp01(v + sd * rng.normal());
  return out;
}

ImageF apply_salt_pepper(const ImageF& img, double amount, RngStream& rng) {
  if (!(amount > 0.0 && amount <= 1.0)) throw Error("salt-and-pepper amount must be in (0, 1]");
  ImageF out = img;
  const int c = img.channels();
  auto data = out.data();
  const std::size_t pixels = static_cast<std::size_t>(img.width()) * img.height();
  for (std::size_t p = 0; p < pixels; ++p) {
    // Conditional on u < amount, u / amount is uniform: the lower half is pepper.
    const double u = rng.uniform();
    if (u >= amount) continue;
    const double value = u < 0.5 * amount ? 0.0 : 1.0;
    for (int k = 0; k < c; ++k) data[p * c + k] = value;
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw Error("blur sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

ImageF apply_gaussian_blur(const ImageF& img, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = img.width(), h = img.height(), c = img.channels();
  ImageF tmp(w, h, c);
  for (int y = 0; y < h; ++y) {
    auto src = img.row(y);
    auto dst = tmp.row(y);
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          acc += kernel[t + radius] * src[reflect_index(x + t, w) * c + k];
        }
        dst[x * c + k] = acc;
      }
    }
  }
  ImageF out(w, h, c);
  std::vector<double> acc(static_cast<std::size_t>(w) * c);
  for (int y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int t = -radius; t <= radius; ++t) {
      const double kv = kernel[t + radius];
      auto src = tmp.row(reflect_index(y + t, h));
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += kv * src[i];
    }
    auto dst = out.row(y);
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = clamp01(acc[i]);
  }
  return out;
}

ImageF apply_quantization(const ImageF& img, int levels) {
  if (levels < 2) throw Error("quantization needs at least 2 levels");
  const double steps = levels - 1;
  ImageF out = img;
  for (double& v : out.data()) v = std::round(v * steps) / steps;
  return out;
}

std::array<int, 64> jpeg_quant_table(int quality, bool chroma) {
  static constexpr std::array<int, 64> kLuma = {
      16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
      14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
      18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
      49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  static constexpr std::array<int, 64> kChroma = {
      17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
      24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
      99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
      99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
  if (quality < 1 || quality > 100) throw Error("JPEG quality must be in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const auto& base = chroma ? kChroma : kLuma;
  std::array<int, 64> table{};
  for (int i = 0; i < 64; ++i) table[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return table;
}

namespace {

// Orthonormal 8-point DCT-II basis: basis[u][x].
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        b[u][x] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

// Quantizes one 8x8 block in place (values level-shifted to [-128, 127]).
void quantize_block(std::array<double, 64>& block, const std::array<int, 64>& table) {
  const auto& b = dct_basis();
  std::array<double, 64> tmp{};
  std::array<double, 64> coef{};
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += b[u][x] * block[y * 8 + x];
      tmp[y * 8 + u] = acc;
    }
  }
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += b[v][y] * tmp[y * 8 + u];
      const double q = table[v * 8 + u];
      coef[v * 8 + u] = std::round(acc / q) * q;
    }
  }
  for (int v = 0; v < 8; ++v) {
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += b[u][x] * coef[v * 8 + u];
      tmp[v * 8 + x] = acc;
    }
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += b[v][y] * tmp[v * 8 + x];
      block[y * 8 + x] = acc;
    }
  }
}

// Runs the block DCT quantization round trip over one plane (0..255 scale).
// Partial edge blocks are padded by edge replication.
void quantize_plane(std::vector<double>& plane, int w, int h, const std::array<int, 64>& table) {
  std::array<double, 64> block{};
  for (int by = 0; by < h; by += 8) {
    for (int bx = 0; bx < w; bx += 8) {
      for (int y = 0; y < 8; ++y) {
        const int sy = std::min(by + y, h - 1);
        for (int x = 0; x < 8; ++x) {
          const int sx = std::min(bx + x, w - 1);
          block[y * 8 + x] = plane[static_cast<std::size_t>(sy) * w + sx] - 128.0;
        }
      }
      quantize_block(block, table);
      for (int y = 0; y < 8 && by + y < h; ++y) {
        for (int x = 0; x < 8 && bx + x < w; ++x) {
          plane[static_cast<std::size_t>(by + y) * w + bx + x] = block[y * 8 + x] + 128.0;
        }
      }
    }
  }
}

}  // namespace

ImageF apply_jpeg(const ImageF& img, int quality) {
  const auto luma = jpeg_quant_table(quality, false);
  const int w = img.width(), h = img.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  ImageF out(w, h, img.channels());
  auto src = img.data();
  auto dst = out.data();
  if (img.channels() == 1) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = src[i] * 255.0;
    quantize_plane(y, w, h, luma);
    for (std::size_t i = 0; i < n; ++i) dst[i] = clamp01(y[i] / 255.0);
    return out;
  }
  const auto chroma = jpeg_quant_table(quality, true);
  std::vector<double> yp(n), cb(n), cr(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = src[3 * i] * 255.0, g = src[3 * i + 1] * 255.0, b = src[3 * i + 2] * 255.0;
    yp[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    cb[i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    cr[i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
  }
  quantize_plane(yp, w, h, luma);
  quantize_plane(cb, w, h, chroma);
  quantize_plane(cr, w, h, chroma);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = yp[i], u = cb[i] - 128.0, v = cr[i] - 128.0;
    dst[3 * i] = clamp01((y + 1.402 * v) / 255.0);
    dst[3 * i + 1] = clamp01((y - 0.344136 * u - 0.714136 * v) / 255.0);
    dst[3 * i + 2] = clamp01((y + 1.772 * u) / 255.0);
  }
  return out;
}

ImageF apply_lowpass(const ImageF& img, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error("low-pass ratio must be in (0, 1)");
  const int sw = std::max(1, static_cast<int>(std::lround(img.width() * ratio)));
  const int sh = std::max(1, static_cast<int>(std::lround(img.height() * ratio)));
  return resize_bilinear(resize_bilinear(img, sw, sh), img.width(), img.height());
}

ImageF apply_nlm_denoise(const ImageF& img, double h, int patch_size, int patch_distance) {
  if (!(h > 0.0)) throw Error("NLM h must be positive");
  if (patch_size < 1 || patch_size % 2 == 0) throw Error("NLM patch size must be odd");
  if (patch_distance < 0) throw Error("NLM patch distance must be non-negative");
  const int w = img.width(), ht = img.height(), c = img.channels();
  if (w < patch_size || ht < patch_size) throw Error("image smaller than NLM patch");

  // Weights are symmetric, w(i, i+d) == w(i+d, i), so only half of the
  // offsets are scored, each over the pixels i where i or i+d lies in the
  // image. Reflection padding keeps patches outside the image well defined.
  const int pr = patch_size / 2;
  const int dist = patch_distance;
  const int pad = 2 * dist + pr;
  const int pw = w + 2 * pad, ph = ht + 2 * pad;
  std::vector<double> padded(static_cast<std::size_t>(pw) * ph * c);
  for (int y = 0; y < ph; ++y) {
    auto src = img.row(reflect_index(y - pad, ht));
    for (int x = 0; x < pw; ++x) {
      const int sx = reflect_index(x - pad, w);
      for (int k = 0; k < c; ++k) {
        padded[(static_cast<std::size_t>(y) * pw + x) * c + k] = src[sx * c + k];
      }
    }
  }
  // Pointer to image pixel (x, y), which may lie in the padding.
  auto at = [&](int x, int y) { return &padded[(static_cast<std::size_t>(y + pad) * pw + x + pad) * c]; };

  const int max_w = w + dist, max_h = ht + dist;
  std::vector<double> diff(static_cast<std::size_t>(max_w + 2 * pr) * (max_h + 2 * pr));
  std::vector<double> vsum(static_cast<std::size_t>(max_w + 2 * pr) * max_h);
  std::vector<double> wgts(static_cast<std::size_t>(max_w));
  std::vector<double> num(static_cast<std::size_t>(w) * ht * c);
  std::vector<double> den(static_cast<std::size_t>(w) * ht, 1.0);
  // The zero offset has weight one.
  std::copy(img.data().begin(), img.data().end(), num.begin());
  const double inv = 1.0 / (static_cast<double>(patch_size) * patch_size * c * h * h);

  for (int dy = 0; dy <= dist; ++dy) {
    for (int dx = -dist; dx <= dist; ++dx) {
      if (dy == 0 && dx <= 0) continue;
      // Domain of i: [x0, x1) x [y0, y1).
      const int x0 = std::min(0, -dx), x1 = std::max(w, w - dx);
      const int y0 = -dy, y1 = ht;
      const int dw = x1 - x0, dh = y1 - y0;
      const int ew = dw + 2 * pr, eh = dh + 2 * pr;
      for (int ey = 0; ey < eh; ++ey) {
        const double* a = at(x0 - pr, y0 - pr + ey);
        const double* b = at(x0 - pr + dx, y0 - pr + ey + dy);
        double* drow = diff.data() + static_cast<std::size_t>(ey) * ew;
        if (c == 3) {
          for (int ex = 0; ex < ew; ++ex) {
            const double d0 = a[3 * ex] - b[3 * ex], d1 = a[3 * ex + 1] - b[3 * ex + 1], d2 = a[3 * ex + 2] - b[3 * ex + 2];
            drow[ex] = d0 * d0 + d1 * d1 + d2 * d2;
          }
        } else {
          for (int ex = 0; ex < ew; ++ex) {
            double acc = 0.0;
            for (int k = 0; k < c; ++k) {
              const double d = a[ex * c + k] - b[ex * c + k];
              acc += d * d;
            }
            drow[ex] = acc;
          }
        }
      }
      // Box sums over patch_size rows, then patch_size columns.
      for (int ex = 0; ex < ew; ++ex) {
        double acc = 0.0;
        for (int k = 0; k < patch_size; ++k) acc += diff[static_cast<std::size_t>(k) * ew + ex];
        vsum[ex] = acc;
        for (int y = 1; y < dh; ++y) {
          acc += diff[static_cast<std::size_t>(y + patch_size - 1) * ew + ex] -
                 diff[static_cast<std::size_t>(y - 1) * ew + ex];
          vsum[static_cast<std::size_t>(y) * ew + ex] = acc;
        }
      }
      for (int yy = 0; yy < dh; ++yy) {
        const int y = y0 + yy;
        const double* vrow = vsum.data() + static_cast<std::size_t>(yy) * ew;
        double* wrow = wgts.data();
        double acc = 0.0;
        for (int k = 0; k < patch_size; ++k) acc += vrow[k];
        wrow[0] = acc;
        for (int x = 1; x < dw; ++x) {
          acc += vrow[x + patch_size - 1] - vrow[x - 1];
          wrow[x] = acc;
        }
        for (int x = 0; x < dw; ++x) wrow[x] = std::exp(-wrow[x] * inv);
        // i = (x, y) takes i + d.
        if (y >= 0) {
          const double* src = at(dx, y + dy);
          double* nrow = num.data() + static_cast<std::size_t>(y) * w * c;
          double* drow = den.data() + static_cast<std::size_t>(y) * w;
          const double* wi = wrow - x0;
          for (int x = 0; x < w; ++x) {
            drow[x] += wi[x];
            for (int k = 0; k < c; ++k) nrow[x * c + k] += wi[x] * src[x * c + k];
          }
        }
        // j = i + d takes i, for j inside the image.
        if (y + dy < ht) {
          const int jy = y + dy;
          const double* src = at(0, y);  // i = j - d
          double* nrow = num.data() + static_cast<std::size_t>(jy) * w * c;
          double* drow = den.data() + static_cast<std::size_t>(jy) * w;
          for (int jx = 0; jx < w; ++jx) {
            const int ix = jx - dx;
            const double wv = wrow[ix - x0];
            drow[jx] += wv;
            for (int k = 0; k < c; ++k) nrow[jx * c + k] += wv * src[ix * c + k];
          }
        }
      }
    }
  }
  ImageF out(w, ht, c);
  auto dst = out.data();
  for (std::size_t i = 0; i < den.size(); ++i) {
    for (int k = 0; k < c; ++k) dst[i * c + k] = clamp01(num[i * c + k] / den[i]);
  }
  return out;
}

namespace {

// FFTW's planner is not thread-safe; execution on private plans is.
std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (ptr == nullptr) throw Error("fftw_malloc failed");
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  void* ptr;
};

}  // namespace

std::vector<double> pink_noise_field(int width, int height, RngStream& rng) {
  if (width < 1 || height < 1) throw Error("pink field dimensions must be positive");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  const int half = width / 2 + 1;
  const std::size_t nc = static_cast<std::size_t>(height) * half;
  // fftw_malloc keeps alignment fixed so FFTW_ESTIMATE picks the same codelets
  // on every call.
  FftwBuffer real_buf(sizeof(double) * n);
  FftwBuffer spec_buf(sizeof(fftw_complex) * nc);
  auto* real = static_cast<double*>(real_buf.ptr);
  auto* spec = static_cast<fftw_complex*>(spec_buf.ptr);

  fftw_plan forward, inverse;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c_2d(height, width, real, spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_2d(height, width, spec, real, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) real[i] = rng.normal();
  fftw_execute(forward);
  for (int ky = 0; ky < height; ++ky) {
    const double fy = static_cast<double>(ky <= height / 2 ? ky : ky - height) / height;
    for (int kx = 0; kx < half; ++kx) {
      const double fx = static_cast<double>(kx) / width;
      const double f = std::sqrt(fx * fx + fy * fy);
      const double gain = f > 0.0 ? 1.0 / f : 0.0;
      spec[static_cast<std::size_t>(ky) * half + kx][0] *= gain;
      spec[static_cast<std::size_t>(ky) * half + kx][1] *= gain;
    }
  }
  fftw_execute(inverse);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }

  std::vector<double> field(real, real + n);
  double mean = 0.0;
  for (double v : field) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double& v : field) {
    v -= mean;
    var += v * v;
  }
  var /= static_cast<double>(n);
  const double inv_sd = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  for (double& v : field) v *= inv_sd;
  return field;
}

ImageF apply_fnoise(const ImageF& img, double factor, RngStream& rng) {
  if (!(factor > 0.0)) throw Error("fnoise factor must be positive");
  const auto field = pink_noise_field(img.width(), img.height(), rng);
  const double amplitude = kFNoiseAmplitudeScale / factor;
  ImageF out = img;
  const int c = img.channels();
  auto data = out.data();
  for (std::size_t p = 0; p < field.size(); ++p) {
    for (int k = 0; k < c; ++k) data[p * c + k] = clamp01(data[p * c + k] + amplitude * field[p]);
  }
  return out;
}

ImageF apply(const ImageF& img, const DistortionSpec& spec, RngStream& rng) {
  switch (spec.cls) {
    case DistortionClass::kGwn:
      return apply_gwn(img, spec.param, rng);
    case DistortionClass::kGaussianBlur:
      return apply_gaussian_blur(img, spec.param);
    case DistortionClass::kSaltPepper:
      return apply_salt_pepper(img, spec.param, rng);
    case DistortionClass::kQuantization:
      return apply_quantization(img, static_cast<int>(std::lround(spec.param)));
    case DistortionClass::kJpeg:
      return apply_jpeg(img, static_cast<int>(std::lround(spec.param)));
    case DistortionClass::kLowPass:
      return apply_lowpass(img, spec.param);
    case DistortionClass::kDenoise:
      return apply_nlm_denoise(img, spec.param);
    case DistortionClass::kFNoise:
      return apply_fnoise(img, spec.param, rng);
    case DistortionClass::kPristine:
      return img;
  }
  throw Error("unknown distortion class");
}

ImageF apply_region(const ImageF& img, const Rect& rect, const DistortionSpec& spec,
                    RngStream& rng) {
  if (!rect.inside(img.width(), img.height())) throw Error("region rect out of bounds");
  ImageF out = img;
  paste(out, apply(crop(img, rect), spec, rng), rect.x, rect.y);
  return out;
}

}  // namespace ddx
