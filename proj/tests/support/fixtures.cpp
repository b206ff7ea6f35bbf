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

#include "support/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <string>

#include "ddx/rng.hpp"

namespace ddx::testing {

ImageF natural_fixture(int width, int height, std::uint64_t seed) {
  RngStream rng(seed, hash_string("natural_fixture"));
  ImageF img(width, height, 3);

  // Background: two-colour gradient with a slow sinusoidal shading.
  std::array<double, 3> c0{}, c1{};
  for (int k = 0; k < 3; ++k) {
    c0[k] = rng.uniform(0.2, 0.8);
    c1[k] = rng.uniform(0.2, 0.8);
  }
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double shade_f = rng.uniform(1.0, 3.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t = 0.5 + 0.5 * ((x / double(width) - 0.5) * std::cos(angle) +
                                    (y / double(height) - 0.5) * std::sin(angle));
      const double shade = 0.08 * std::sin(shade_f * 2 * std::numbers::pi * y / height + x * 0.01);
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = c0[k] + t * (c1[k] - c0[k]) + shade;
    }
  }

  // Hard-edged shapes, some striped.
  const int shapes = static_cast<int>(rng.uniform_int(10, 16));
  for (int s = 0; s < shapes; ++s) {
    const double cx = rng.uniform(0, width), cy = rng.uniform(0, height);
    const double rx = rng.uniform(0.04, 0.18) * width, ry = rng.uniform(0.04, 0.18) * height;
    const bool ellipse = rng.uniform() < 0.5;
    const bool striped = rng.uniform() < 0.4;
    const double period = rng.uniform(4.0, 12.0);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    std::array<double, 3> col{};
    for (double& v : col) v = rng.uniform(0.1, 0.9);
    for (int y = std::max(0, int(cy - ry)); y < std::min(height, int(cy + ry) + 1); ++y) {
      for (int x = std::max(0, int(cx - rx)); x < std::min(width, int(cx + rx) + 1); ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        if (ellipse && dx * dx + dy * dy > 1.0) continue;
        double mod = 0.0;
        if (striped) {
          mod = 0.12 * std::sin(2 * std::numbers::pi * (x * std::cos(theta) + y * std::sin(theta)) / period);
        }
        for (int k = 0; k < 3; ++k) img.at(x, y, k) = col[k] + mod;
      }
    }
  }

  // Fine grain: 2x2-cell value noise plus a little per-pixel jitter.
  const int gw = width / 2 + 2, gh = height / 2 + 2;
  std::vector<double> cells(static_cast<std::size_t>(gw) * gh);
  for (double& v : cells) v = rng.uniform(-0.03, 0.03);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double grain = cells[(y / 2) * gw + x / 2] + rng.uniform(-0.015, 0.015);
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = std::clamp(img.at(x, y, k) + grain, 0.02, 0.98);
    }
  }
  return img;
}

std::vector<std::filesystem::path> write_reference_set(const std::filesystem::path& dir, int count,
                                                       int width, int height, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "ref_%02d.png", i);
    const auto path = dir / name;
    save_image(to_u8(natural_fixture(width, height, hash_combine(seed, static_cast<std::uint64_t>(i)))), path);
    out.push_back(path);
  }
  return out;
}

ImageF random_image(int width, int height, int channels, std::uint64_t seed) {
  RngStream rng(seed, 99);
  ImageF img(width, height, channels);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

ImageF constant_image(int width, int height, int channels, double value) {
  return ImageF(width, height, channels, value);
}

double mse(const ImageF& a, const ImageF& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ddx_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ddx::testing
