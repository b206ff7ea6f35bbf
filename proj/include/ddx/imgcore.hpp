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

#ifndef DDX_IMGCORE_HPP_
#define DDX_IMGCORE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddx {

// All recoverable failures in the toolkit surface as ddx::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major interleaved raster. Image<std::uint8_t> is the storage form,
// Image<double> the normalized [0,1] working form. Conversions between the
// two are explicit (to_real / to_u8).
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0) throw Error("image dimensions must be positive");
    if (channels != 1 && channels != 3) throw Error("image must have 1 or 3 channels");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  Image(int width, int height, int channels, std::vector<T> data)
      : Image(width, height, channels) {
    if (data.size() != data_.size()) throw Error("image data length mismatch");
    data_ = std::move(data);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  T& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  const T& at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  std::span<T> row(int y) {
    return {data_.data() + static_cast<std::size_t>(y) * width_ * channels_,
            static_cast<std::size_t>(width_) * channels_};
  }
  std::span<const T> row(int y) const {
    return {data_.data() + static_cast<std::size_t>(y) * width_ * channels_,
            static_cast<std::size_t>(width_) * channels_};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<double>;

// Half-open pixel rectangle [x, x+w) x [y, y+h), origin top-left.
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  std::int64_t area() const { return static_cast<std::int64_t>(w) * h; }
  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool valid() const { return w > 0 && h > 0; }
  bool inside(int width, int height) const {
    return valid() && x >= 0 && y >= 0 && right() <= width && bottom() <= height;
  }
  bool operator==(const Rect&) const = default;
};

// Area of the intersection of two rects (0 when disjoint).
std::int64_t intersection_area(const Rect& a, const Rect& b);

ImageF to_real(const ImageU8& img);
// Rounds half away from zero, then clamps to [0, 255].
ImageU8 to_u8(const ImageF& img);

// Mirror index without repeating the edge sample (…2 1 0 1 2…), valid for
// any integer offset.
int reflect_index(int i, int n);

template <typename T>
Image<T> crop(const Image<T>& img, const Rect& r);
template <typename T>
void paste(Image<T>& dst, const Image<T>& src, int x, int y);
template <typename T>
Image<T> center_crop(const Image<T>& img, int out_w, int out_h);
template <typename T>
Image<T> horizontal_flip(const Image<T>& img);

// Bilinear resampling with half-pixel-centred coordinates and edge clamping.
ImageF resize_bilinear(const ImageF& img, int out_w, int out_h);

// Replicates a single-channel image into three identical channels.
ImageF to_three_channels(const ImageF& img);

enum class ImageFormat { kPng, kJpeg };

ImageU8 load_image(const std::filesystem::path& path);
void save_image(const ImageU8& img, const std::filesystem::path& path,
                ImageFormat format = ImageFormat::kPng, int quality = 95);

}  // namespace ddx

#endif  // DDX_IMGCORE_HPP_
