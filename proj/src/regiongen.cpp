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

#include "ddx/regiongen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ddx {

std::string_view variant_name(Variant v) { return v == Variant::kBasic ? "basic" : "difficult"; }

Variant parse_variant(std::string_view name) {
  if (name == "basic") return Variant::kBasic;
  if (name == "difficult") return Variant::kDifficult;
  throw Error("unknown variant '" + std::string(name) + "'");
}

void RegionConfig::validate() const {
  if (count_min < 1 || count_min > count_max) throw Error("invalid region count range");
  if (!(ratio_min > 0.0 && ratio_min <= ratio_max && ratio_max <= 1.0)) {
    throw Error("invalid region ratio range");
  }
  if (image_size < 1) throw Error("invalid image size");
  if (max_rejection_attempts < 1 || max_size_redraws < 1 || max_layout_restarts < 1) {
    throw Error("rejection limits must be positive");
  }
}

RegionConfig preset(Variant v) {
  RegionConfig cfg;
  if (v == Variant::kDifficult) {
    cfg.count_min = 5;
    cfg.count_max = 9;
    cfg.ratio_min = 0.1;
    cfg.ratio_max = 0.3;
  }
  return cfg;
}

namespace {

int side_from_ratio(double ratio, int size) {
  return std::clamp(static_cast<int>(std::lround(ratio * size)), 1, size);
}

bool overlaps_any(const Rect& r, const std::vector<Rect>& placed) {
  for (const Rect& p : placed) {
    if (intersection_area(r, p) > 0) return true;
  }
  return false;
}

bool try_place(const RegionConfig& cfg, RngStream& rng, std::vector<Rect>& placed) {
  const int s = cfg.image_size;
  for (int redraw = 0; redraw < cfg.max_size_redraws; ++redraw) {
    const int w = side_from_ratio(rng.uniform(cfg.ratio_min, cfg.ratio_max), s);
    const int h = side_from_ratio(rng.uniform(cfg.ratio_min, cfg.ratio_max), s);
    for (int attempt = 0; attempt < cfg.max_rejection_attempts; ++attempt) {
      const Rect r{static_cast<int>(rng.uniform_int(0, s - w)),
                   static_cast<int>(rng.uniform_int(0, s - h)), w, h};
      if (!overlaps_any(r, placed)) {
        placed.push_back(r);
        return true;
      }
    }
  }
  return false;
}

}  // namespace

RegionSample sample_regions(const RegionConfig& cfg, RngStream& rng) {
  cfg.validate();
  RegionSample out;
  out.requested = static_cast<int>(rng.uniform_int(cfg.count_min, cfg.count_max));
  for (int n = out.requested; n >= 1; --n) {
    for (int restart = 0; restart < cfg.max_layout_restarts; ++restart) {
      std::vector<Rect> placed;
      placed.reserve(n);
      bool ok = true;
      for (int i = 0; i < n && ok; ++i) ok = try_place(cfg, rng, placed);
      if (ok) {
        out.rects = std::move(placed);
        return out;
      }
    }
    ++out.degradations;
  }
  return out;  // unreachable for valid configs: one rect always fits
}

DistortionSpec sample_level(DistortionClass cls, RngStream& rng) {
  const LevelGrid g = level_grid(cls);
  double param = rng.uniform(g.min, g.max);
  if (g.integer_valued) param = std::round(param);
  return {cls, param};
}

DetectionSample synthesize_detection_image(const ImageF& ref, const RegionConfig& cfg,
                                           RngStream& rng) {
  const int s = cfg.image_size;
  if (ref.width() < s || ref.height() < s) {
    throw Error("reference " + std::to_string(ref.width()) + "x" + std::to_string(ref.height()) +
                " smaller than " + std::to_string(s) + "x" + std::to_string(s));
  }
  DetectionSample out;
  out.image = center_crop(ref, s, s);
  RngStream layout_rng = rng.derive(0);
  RegionSample layout = sample_regions(cfg, layout_rng);
  out.degradations = layout.degradations;
  RngStream label_rng = rng.derive(1);
  for (std::size_t i = 0; i < layout.rects.size(); ++i) {
    const auto cls = kDistortionClasses[label_rng.uniform_int(0, kNumDistortionClasses - 1)];
    const DistortionSpec spec = sample_level(cls, label_rng);
    RngStream op_rng = rng.derive(100 + i);
    out.image = apply_region(out.image, layout.rects[i], spec, op_rng);
    out.regions.push_back({layout.rects[i], spec});
  }
  return out;
}

}  // namespace ddx
