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

#include <algorithm>
#include <cmath>

#include "ddx/imgcore.hpp"

namespace ddx {

std::int64_t intersection_area(const Rect& a, const Rect& b) {
  const std::int64_t w = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const std::int64_t h = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return (w > 0 && h > 0) ? w * h : 0;
}

ImageF to_real(const ImageU8& img) {
  ImageF out(img.width(), img.height(), img.channels());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] / 255.0;
  return out;
}

ImageU8 to_u8(const ImageF& img) {
  ImageU8 out(img.width(), img.height(), img.channels());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = std::round(src[i] * 255.0);
    dst[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

template <typename T>
Image<T> crop(const Image<T>& img, const Rect& r) {
  if (!r.inside(img.width(), img.height())) throw Error("crop rect out of bounds");
  Image<T> out(r.w, r.h, img.channels());
  const int c = img.channels();
  for (int y = 0; y < r.h; ++y) {
    auto src = img.row(r.y + y).subspan(static_cast<std::size_t>(r.x) * c,
                                         static_cast<std::size_t>(r.w) * c);
    std::copy(src.begin(), src.end(), out.row(y).begin());
  }
  return out;
}

template <typename T>
void paste(Image<T>& dst, const Image<T>& src, int x, int y) {
  const Rect r{x, y, src.width(), src.height()};
  if (!r.inside(dst.width(), dst.height()) || src.channels() != dst.channels()) {
    throw Error("paste target out of bounds");
  }
  const int c = dst.channels();
  for (int j = 0; j < src.height(); ++j) {
    auto s = src.row(j);
    std::copy(s.begin(), s.end(), dst.row(y + j).begin() + static_cast<std::ptrdiff_t>(x) * c);
  }
}

template <typename T>
Image<T> center_crop(const Image<T>& img, int out_w, int out_h) {
  if (out_w > img.width() || out_h > img.height()) {
    throw Error("crop " + std::to_string(out_w) + "x" + std::to_string(out_h) +
                " larger than image " + std::to_string(img.width()) + "x" +
                std::to_string(img.height()));
  }
  return crop(img, Rect{(img.width() - out_w) / 2, (img.height() - out_h) / 2, out_w, out_h});
}

template <typename T>
Image<T> horizontal_flip(const Image<T>& img) {
  Image<T> out(img.width(), img.height(), img.channels());
  const int c = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    auto src = img.row(y);
    auto dst = out.row(y);
    for (int x = 0; x < img.width(); ++x) {
      const int mx = img.width() - 1 - x;
      for (int k = 0; k < c; ++k) dst[x * c + k] = src[mx * c + k];
    }
  }
  return out;
}

template ImageU8 crop(const ImageU8&, const Rect&);
template ImageF crop(const ImageF&, const Rect&);
template void paste(ImageU8&, const ImageU8&, int, int);
template void paste(ImageF&, const ImageF&, int, int);
template ImageU8 center_crop(const ImageU8&, int, int);
template ImageF center_crop(const ImageF&, int, int);
template ImageU8 horizontal_flip(const ImageU8&);
template ImageF horizontal_flip(const ImageF&);

namespace {

struct Tap {
  int i0;
  int i1;
  double frac;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

ImageF resize_bilinear(const ImageF& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw Error("resize target must be at least 1x1");
  const auto tx = bilinear_taps(img.width(), out_w);
  const auto ty = bilinear_taps(img.height(), out_h);
  const int c = img.channels();
  ImageF out(out_w, out_h, c);
  for (int y = 0; y < out_h; ++y) {
    auto r0 = img.row(ty[y].i0);
    auto r1 = img.row(ty[y].i1);
    const double fy = ty[y].frac;
    auto dst = out.row(y);
    for (int x = 0; x < out_w; ++x) {
      const Tap& t = tx[x];
      for (int k = 0; k < c; ++k) {
        const double top = r0[t.i0 * c + k] + t.frac * (r0[t.i1 * c + k] - r0[t.i0 * c + k]);
        const double bot = r1[t.i0 * c + k] + t.frac * (r1[t.i1 * c + k] - r1[t.i0 * c + k]);
        dst[x * c + k] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

ImageF to_three_channels(const ImageF& img) {
  if (img.channels() == 3) return img;
  ImageF out(img.width(), img.height(), 3);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
  }
  return out;
}

}  // namespace ddx
