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

#ifndef DDX_DISTORTIONS_HPP_
#define DDX_DISTORTIONS_HPP_

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "ddx/imgcore.hpp"
#include "ddx/rng.hpp"

namespace ddx {

// Stable integer codes; Pristine is the detection background class.
enum class DistortionClass : int {
  kGwn = 0,
  kGaussianBlur = 1,
  kSaltPepper = 2,
  kQuantization = 3,
  kJpeg = 4,
  kLowPass = 5,
  kDenoise = 6,
  kFNoise = 7,
  kPristine = 8,
};

inline constexpr int kNumDistortionClasses = 8;
inline constexpr int kNumClasses = 9;

inline constexpr std::array<DistortionClass, kNumDistortionClasses> kDistortionClasses = {
    DistortionClass::kGwn,          DistortionClass::kGaussianBlur, DistortionClass::kSaltPepper,
    DistortionClass::kQuantization, DistortionClass::kJpeg,         DistortionClass::kLowPass,
    DistortionClass::kDenoise,      DistortionClass::kFNoise};

constexpr int class_code(DistortionClass c) { return static_cast<int>(c); }
DistortionClass class_from_code(int code);
// Short lowercase names used in manifests and on the command line
// ("gwn", "blur", "sp", "quantization", "jpeg", "lowpass", "denoise",
// "fnoise", "pristine").
std::string_view class_name(DistortionClass c);
std::optional<DistortionClass> parse_class(std::string_view name);

struct DistortionSpec {
  DistortionClass cls = DistortionClass::kPristine;
  double param = 0.0;

  bool operator==(const DistortionSpec&) const = default;
};

// Three severity-ascending parameters per class and the continuous range
// spanned by them.
struct LevelGrid {
  std::array<double, 3> levels;
  double min;
  double max;
  bool integer_valued;
};

LevelGrid level_grid(DistortionClass c);
void validate_spec(const DistortionSpec& spec);

// Amplitude of the pink field is (1/factor) * this constant.
inline constexpr double kFNoiseAmplitudeScale = 1.0;

ImageF apply_gwn(const ImageF& img, double variance, RngStream& rng);
ImageF apply_salt_pepper(const ImageF& img, double amount, RngStream& rng);
ImageF apply_gaussian_blur(const ImageF& img, double sigma);
ImageF apply_quantization(const ImageF& img, int levels);
ImageF apply_jpeg(const ImageF& img, int quality);
ImageF apply_lowpass(const ImageF& img, double ratio);
ImageF apply_nlm_denoise(const ImageF& img, double h, int patch_size = 7, int patch_distance = 11);
ImageF apply_fnoise(const ImageF& img, double factor, RngStream& rng);

// Unit-variance, zero-mean field whose spectral amplitude falls as 1/|freq|.
std::vector<double> pink_noise_field(int width, int height, RngStream& rng);

ImageF apply(const ImageF& img, const DistortionSpec& spec, RngStream& rng);
// Distorts only the pixels inside `rect`; spatial operators see the cropped
// sub-image alone.
ImageF apply_region(const ImageF& img, const Rect& rect, const DistortionSpec& spec,
                    RngStream& rng);

// Exposed for tests and the JPEG oracle.
std::array<int, 64> jpeg_quant_table(int quality, bool chroma);
std::vector<double> gaussian_kernel(double sigma);

}  // namespace ddx

#endif  // DDX_DISTORTIONS_HPP_
