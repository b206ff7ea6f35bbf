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

#ifndef DDX_EVALMAP_HPP_
#define DDX_EVALMAP_HPP_

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddx/boxes.hpp"
#include "ddx/dataset.hpp"
#include "ddx/regiongen.hpp"

namespace ddx {

inline const std::vector<double> kDefaultIouThresholds = {0.5, 0.75, 0.9};

// Greedy matching of one image's predictions against its ground truth for a
// single class. Predictions are visited by descending score (ties keep input
// order); each takes the unmatched GT with the highest IoU when that IoU
// reaches the threshold.
struct MatchResult {
  std::vector<bool> pred_tp;     // indexed like the input predictions
  std::vector<bool> gt_matched;  // indexed like the input GTs
};

MatchResult match_detections(std::span<const ScoredBox> preds, std::span<const Rect> gts,
                             double iou_threshold);

struct RankedPrediction {
  double score = 0.0;
  bool tp = false;
};

// All-point interpolated AP over predictions given in tie-break order.
// Returns nullopt when there is no ground truth.
std::optional<double> average_precision(std::span<const RankedPrediction> preds, std::size_t n_gt);

// Everything needed to score one test image.
struct ImageEval {
  std::string id;
  int image_size = 300;
  std::vector<RegionAnnotation> gts;
  std::vector<ScoredBox> preds;
};

struct ApResult {
  double threshold = 0.0;
  std::array<std::optional<double>, kNumDistortionClasses> per_class{};
  std::optional<double> map;        // nullopt when no class has GT
  std::vector<std::string> notes;   // e.g. classes excluded for lack of GT
};

std::vector<ApResult> mean_ap(std::span<const ImageEval> images,
                              std::span<const double> thresholds = kDefaultIouThresholds);

struct ClassificationEval {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};  // [true][pred]
};

ClassificationEval classification_accuracy(
    std::span<const std::pair<DistortionClass, DistortionClass>> truth_pred);

struct SizeBucket {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t gts = 0;
  std::size_t matched = 0;
  std::optional<double> recall;  // absent for empty buckets
};

inline const std::vector<double> kDefaultSizeEdges = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};

// Recall per bucket of GT linear size ratio sqrt(w*h)/image_size. The last
// bucket includes its upper edge; ratios outside the edges are ignored.
std::vector<SizeBucket> size_bucketed_recall(std::span<const ImageEval> images,
                                             double iou_threshold = 0.9,
                                             std::span<const double> edges = kDefaultSizeEdges);

// mAP for every (train variant, test variant) pair; cells[train][test].
struct TransferTable {
  std::vector<double> thresholds;
  std::array<std::array<std::vector<std::optional<double>>, 2>, 2> cells;
};

TransferTable transfer_matrix(
    const std::array<std::array<std::vector<ImageEval>, 2>, 2>& evals,
    std::span<const double> thresholds = kDefaultIouThresholds);

std::string format_map_row(const std::string& label, const std::vector<ApResult>& results);
std::string format_map_table(const std::string& label, const std::vector<ApResult>& results);
std::string format_classification_table(const std::string& label, const ClassificationEval& eval);
std::string format_confusion(const ClassificationEval& eval);
std::string format_transfer_table(const TransferTable& table);
std::string map_csv(const std::vector<ApResult>& results);
std::string size_buckets_csv(const std::vector<SizeBucket>& buckets);
std::string transfer_csv(const TransferTable& table);

// Predictions interchange: one JSON object per line,
// {"image": <manifest file>, "boxes": [{"class","score","x","y","w","h"}...]}.
struct ImagePredictions {
  std::string image;
  std::vector<ScoredBox> boxes;

  bool operator==(const ImagePredictions&) const = default;
};

void write_predictions(const std::filesystem::path& path, const std::vector<ImagePredictions>& preds);
std::vector<ImagePredictions> read_predictions(const std::filesystem::path& path);

// Pairs detection records of `split` with their predictions (missing
// predictions count as no detections).
std::vector<ImageEval> join_predictions(const std::vector<ManifestRecord>& records, Split split,
                                        const std::vector<ImagePredictions>& preds);

}  // namespace ddx

#endif  // DDX_EVALMAP_HPP_
