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

#ifndef DDX_BOXES_HPP_
#define DDX_BOXES_HPP_

#include "ddx/distortions.hpp"
#include "ddx/imgcore.hpp"

namespace ddx {

// A detector output: region, class (never Pristine) and confidence in [0,1].
struct ScoredBox {
  Rect rect;
  DistortionClass cls = DistortionClass::kGwn;
  double score = 0.0;

  bool operator==(const ScoredBox&) const = default;
};

// Intersection over union with exact integer areas.
double iou(const Rect& a, const Rect& b);

}  // namespace ddx

#endif  // DDX_BOXES_HPP_
