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

#ifndef DDX_DETECTOR_HPP_
#define DDX_DETECTOR_HPP_

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ddx/boxes.hpp"
#include "ddx/dataset.hpp"
#include "ddx/distortions.hpp"
#include "ddx/imgcore.hpp"

namespace ddx {

// Network geometry: conv 7x7x3->16, ReLU, 2x2 max-pool, conv 3x3x16->32,
// ReLU, global average pool, affine 32->9, softmax. Convolutions are valid
// (no padding), stride 1.
inline constexpr int kPatchSize = 32;
inline constexpr int kInChannels = 3;
inline constexpr int kConv1Kernel = 7;
inline constexpr int kConv1Out = 16;
inline constexpr int kConv2Kernel = 3;
inline constexpr int kConv2Out = 32;
inline constexpr int kConv1Size = kPatchSize - kConv1Kernel + 1;  // 26
inline constexpr int kPoolSize = kConv1Size / 2;                   // 13
inline constexpr int kConv2Size = kPoolSize - kConv2Kernel + 1;    // 11
inline constexpr int kPatchValues = kPatchSize * kPatchSize * kInChannels;
// Input contrast normalization: each patch is centred per channel and divided
// by its RMS plus this epsilon before the first convolution.
inline constexpr double kContrastEpsilon = 0.01;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Weight layouts are row-major with the input index (ky, kx, c) as the row and
// the output channel as the column, i.e. conv1_w is 7x7x3x16 flattened.
struct Params {
  Matrix conv1_w;
  RowVector conv1_b;
  Matrix conv2_w;
  RowVector conv2_b;
  Matrix fc_w;
  RowVector fc_b;

  static Params zeros();

  // Visits (name, shape, storage) in the canonical tensor order.
  template <typename Fn>
  void for_each_tensor(Fn&& fn);
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const;

  std::size_t parameter_count() const;
};

struct LayerDesc {
  std::string name;
  std::vector<std::uint32_t> shape;
};

std::vector<LayerDesc> architecture();

struct ModelMeta {
  int patch_size = kPatchSize;
  std::vector<std::string> classes;  // class names by code
  std::uint64_t seed = 0;
  int epochs = 0;
};

struct PatchClassifierModel {
  Params params;
  ModelMeta meta;

  static PatchClassifierModel zeros();
  // He-normal weights, zero biases.
  static PatchClassifierModel initialized(std::uint64_t seed);
  // Rounds parameters to their 32-bit storage precision.
  void round_to_storage();
};

using ClassProbs = std::array<double, kNumClasses>;

// A batch of patches, each kPatchValues samples in HWC order.
struct PatchBatch {
  std::vector<double> data;
  std::vector<int> labels;

  std::size_t size() const { return data.size() / kPatchValues; }
  std::span<const double> patch(std::size_t i) const {
    return std::span<const double>(data).subspan(i * kPatchValues, kPatchValues);
  }
  void add(std::span<const double> patch, int label);
};

// Copies the 32x32 window at (x, y) of a three-channel image, optionally
// mirrored, into `dst`.
void extract_patch(const ImageF& img, int x, int y, bool flip, std::span<double> dst);

void normalize_patch(std::span<const double> patch, std::span<double> out);

ClassProbs forward(const PatchClassifierModel& model, std::span<const double> patch);
ClassProbs forward(const PatchClassifierModel& model, const ImageF& patch);
std::vector<ClassProbs> forward_batch(const PatchClassifierModel& model, std::span<const double> patches);

struct Gradients {
  Params grad;
  double loss = 0.0;  // mean cross-entropy over the batch
  int correct = 0;
};

double batch_loss(const PatchClassifierModel& model, const PatchBatch& batch);
// Gradients of the mean cross-entropy. Chunks of the batch may be evaluated
// on several threads; partial sums are reduced in chunk order.
Gradients backward(const PatchClassifierModel& model, const PatchBatch& batch, int threads = 1);

// Classical momentum: v <- momentum*v + g; p <- p - lr*v.
void sgd_step(PatchClassifierModel& model, const Params& grad, double lr, double momentum,
              Params& velocity);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 10;
  int patches_per_image = 32;
  std::uint64_t seed = 1;
  bool horizontal_flip = true;
  // Detection only: label windows that overlap a region without containing
  // their centre as pristine instead of skipping them. This teaches the
  // classifier where region borders are, which box edges depend on.
  bool label_straddlers = true;
  int threads = 1;

  void validate() const;
};

// Training images held in memory with their supervision.
struct TrainingSet {
  Task task = Task::kClassification;
  std::vector<ImageF> images;  // three-channel
  std::vector<DistortionClass> labels;                   // classification
  std::vector<std::vector<RegionAnnotation>> regions;    // detection
};

TrainingSet load_training_set(const std::filesystem::path& manifest, Split split);

struct PatchRef {
  std::uint32_t image = 0;
  int x = 0;
  int y = 0;
  bool flip = false;
  int label = 0;

  bool operator==(const PatchRef&) const = default;
};

// Patch label for detection supervision: the class of the region containing
// the patch centre, otherwise Pristine. Without `label_straddlers`, patches
// that overlap a region without containing their centre get -1 (skipped).
int detection_patch_label(const std::vector<RegionAnnotation>& regions, int x, int y,
                          bool label_straddlers = false);

// The shuffled sample stream of one epoch. With flipping enabled every
// sampled window appears twice: as-is and mirrored.
std::vector<PatchRef> epoch_samples(const TrainingSet& set, const TrainConfig& cfg, int epoch);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  PatchClassifierModel model;
  std::vector<EpochStats> curve;
};

TrainResult train(const TrainingSet& set, const TrainConfig& cfg);
TrainResult train(const std::filesystem::path& manifest, const TrainConfig& cfg);
void write_training_curve(const std::filesystem::path& path, const std::vector<EpochStats>& curve);

struct Classification {
  DistortionClass cls = DistortionClass::kPristine;
  double confidence = 0.0;
  ClassProbs probs{};
};

// Averages a 5x5 grid of patches; ties go to the lowest class code.
Classification classify_image(const PatchClassifierModel& model, const ImageF& img, int threads = 1);
DistortionClass argmax_class(const ClassProbs& p);

struct DetectConfig {
  int stride = 8;
  double threshold = 0.5;
  double nms_iou = 0.45;
  // Place each box side at the median interpolated threshold crossing along
  // the component's rows or columns. When false, sides sit box_margin pixels
  // outside the outermost activated window centres.
  bool refine_edges = true;
  int box_margin = 4;
  int threads = 1;
};

// Per-window class probabilities on the sliding-window grid.
struct ProbMaps {
  int image_width = 0;
  int image_height = 0;
  std::vector<int> xs;  // window left edges
  std::vector<int> ys;  // window top edges
  std::vector<ClassProbs> probs;  // row-major over (ys, xs)

  const ClassProbs& at(std::size_t gx, std::size_t gy) const { return probs[gy * xs.size() + gx]; }
};

// Window origins 0, stride, 2*stride, ... plus a final window flush with the
// far edge.
std::vector<int> window_positions(int extent, int stride);

ProbMaps score_windows(const PatchClassifierModel& model, const ImageF& img, const DetectConfig& cfg);
std::vector<ScoredBox> boxes_from_maps(const ProbMaps& maps, const DetectConfig& cfg);
std::vector<ScoredBox> non_max_suppression(std::vector<ScoredBox> boxes, double iou_threshold);
std::vector<ScoredBox> detect(const PatchClassifierModel& model, const ImageF& img,
                              const DetectConfig& cfg = {});

// "DDM1" container: magic, version, shape table, metadata, float32 payload.
void save_model(const PatchClassifierModel& model, const std::filesystem::path& path);
PatchClassifierModel load_model(const std::filesystem::path& path);

template <typename Fn>
void Params::for_each_tensor(Fn&& fn) {
  fn("conv1.weight", std::vector<std::uint32_t>{7, 7, 3, 16}, conv1_w.data(), conv1_w.size());
  fn("conv1.bias", std::vector<std::uint32_t>{16}, conv1_b.data(), conv1_b.size());
  fn("conv2.weight", std::vector<std::uint32_t>{3, 3, 16, 32}, conv2_w.data(), conv2_w.size());
  fn("conv2.bias", std::vector<std::uint32_t>{32}, conv2_b.data(), conv2_b.size());
  fn("fc.weight", std::vector<std::uint32_t>{32, 9}, fc_w.data(), fc_w.size());
  fn("fc.bias", std::vector<std::uint32_t>{9}, fc_b.data(), fc_b.size());
}

template <typename Fn>
void Params::for_each_tensor(Fn&& fn) const {
  const_cast<Params*>(this)->for_each_tensor(
      [&](const char* name, const std::vector<std::uint32_t>& shape, double* data, Eigen::Index n) {
        fn(name, shape, static_cast<const double*>(data), n);
      });
}

}  // namespace ddx

#endif  // DDX_DETECTOR_HPP_
