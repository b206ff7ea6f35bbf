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

#ifndef DDX_REGIONGEN_HPP_
#define DDX_REGIONGEN_HPP_

#include <string_view>
#include <utility>
#include <vector>

#include "ddx/distortions.hpp"
#include "ddx/imgcore.hpp"
#include "ddx/rng.hpp"

namespace ddx {

enum class Variant { kBasic, kDifficult };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct RegionConfig {
  int count_min = 1;
  int count_max = 4;
  double ratio_min = 0.3;
  double ratio_max = 0.7;
  int image_size = 300;
  // Position draws per rect before its size is re-drawn.
  int max_rejection_attempts = 100;
  // Size re-draws per rect before the whole layout is restarted.
  int max_size_redraws = 10;
  // Layout restarts before the region count is reduced by one.
  int max_layout_restarts = 200;

  void validate() const;
};

struct RegionAnnotation {
  Rect rect;
  DistortionSpec spec;

  bool operator==(const RegionAnnotation&) const = default;
};

RegionConfig preset(Variant v);

struct RegionSample {
  std::vector<Rect> rects;
  int requested = 0;  // count drawn before any degradation
  int degradations = 0;
};

RegionSample sample_regions(const RegionConfig& cfg, RngStream& rng);
DistortionSpec sample_level(DistortionClass cls, RngStream& rng);

struct DetectionSample {
  ImageF image;
  std::vector<RegionAnnotation> regions;
  int degradations = 0;
};

DetectionSample synthesize_detection_image(const ImageF& ref, const RegionConfig& cfg,
                                           RngStream& rng);

}  // namespace ddx

#endif  // DDX_REGIONGEN_HPP_
