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

#ifndef DDX_DATASET_HPP_
#define DDX_DATASET_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ddx/distortions.hpp"
#include "ddx/regiongen.hpp"

namespace ddx {

enum class Split { kTrain, kVal, kTest };
enum class Task { kClassification, kDetection };
enum class SplitUnit { kReference, kImage };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);
std::string_view task_name(Task t);
std::string_view unit_name(SplitUnit u);
SplitUnit parse_unit(std::string_view name);

// One dataset item. `file` is relative to the manifest's directory.
struct ManifestRecord {
  std::string file;
  std::string ref_id;
  Split split = Split::kTrain;
  Task task = Task::kClassification;
  int width = 0;
  int height = 0;
  // Classification only.
  DistortionSpec spec;
  int level_index = -1;
  // Detection only.
  Variant variant = Variant::kBasic;
  std::vector<RegionAnnotation> regions;

  bool operator==(const ManifestRecord&) const = default;
};

struct SplitSpec {
  std::array<double, 3> fractions{0.6, 0.2, 0.2};  // train, val, test
  SplitUnit unit = SplitUnit::kReference;
  std::uint64_t seed = 0;

  static SplitSpec classification(std::uint64_t seed = 0);
  static SplitSpec detection(std::uint64_t seed = 0);
  void validate() const;
};

// Deterministic shuffled assignment of n units to splits; split sizes are
// round(n*f_train) and round(n*(f_train+f_val)) - round(n*f_train).
std::vector<Split> assign_splits(std::size_t n, const SplitSpec& spec);

struct BuildOptions {
  int threads = 1;
  // Called for user-facing warnings (skipped references and the like).
  std::function<void(const std::string&)> warn;
};

struct BuildResult {
  std::filesystem::path manifest;
  std::vector<ManifestRecord> records;
  std::vector<std::string> skipped;  // "ref_id: reason"
  int degradations = 0;
};

std::vector<std::filesystem::path> list_reference_images(const std::filesystem::path& dir);

BuildResult build_classification_dataset(const std::filesystem::path& refs,
                                         const std::filesystem::path& out,
                                         const SplitSpec& split, std::uint64_t master_seed,
                                         const BuildOptions& opts = {});

BuildResult build_detection_dataset(const std::filesystem::path& refs,
                                    const std::filesystem::path& out, Variant variant,
                                    int per_ref, const SplitSpec& split,
                                    std::uint64_t master_seed, const BuildOptions& opts = {});

std::string record_to_json_line(const ManifestRecord& rec);
// Strict parse of one manifest line; throws ddx::Error naming the line number.
ManifestRecord parse_record_line(std::string_view line, std::size_t line_no);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& recs);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

struct VerifyIssue {
  std::size_t line = 0;  // 1-based; 0 for file-level findings
  bool error = true;     // false: warning
  std::string message;
};

struct VerifyReport {
  std::size_t records = 0;
  std::map<std::string, std::size_t> split_counts;
  std::vector<VerifyIssue> issues;

  bool ok() const;
  std::string to_json() const;
};

VerifyReport verify_manifest(const std::filesystem::path& path);

// FNV-1a over the file bytes, as 16 hex digits.
std::string file_hash_hex(const std::filesystem::path& path);

}  // namespace ddx

#endif  // DDX_DATASET_HPP_
