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

#ifndef DDX_TESTS_SUPPORT_FIXTURES_HPP_
#define DDX_TESTS_SUPPORT_FIXTURES_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ddx/imgcore.hpp"

namespace ddx::testing {

// Procedural stand-in for a photograph: smooth shaded background, hard-edged
// shapes, striped texture and fine grain.
ImageF natural_fixture(int width, int height, std::uint64_t seed);

// Writes `count` fixtures as ref_00.png, ref_01.png, ... and returns paths.
std::vector<std::filesystem::path> write_reference_set(const std::filesystem::path& dir, int count,
                                                       int width, int height, std::uint64_t seed);

ImageF random_image(int width, int height, int channels, std::uint64_t seed);
ImageF constant_image(int width, int height, int channels, double value);

double mse(const ImageF& a, const ImageF& b);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace ddx::testing

#endif  // DDX_TESTS_SUPPORT_FIXTURES_HPP_
