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

#include "ddx/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "ddx/parallel.hpp"
#include "ddx/rng.hpp"

namespace ddx {

namespace {

constexpr int kConv1Taps = kConv1Kernel * kConv1Kernel * kInChannels;  // 147
constexpr int kConv2Taps = kConv2Kernel * kConv2Kernel * kConv1Out;    // 144
constexpr int kConv1Pixels = kConv1Size * kConv1Size;                  // 676
constexpr int kPoolPixels = kPoolSize * kPoolSize;                     // 169
constexpr int kConv2Pixels = kConv2Size * kConv2Size;                  // 121
// Fixed gradient chunk so the reduction order never depends on threads.
constexpr std::size_t kGradChunk = 8;

}  // namespace

Params Params::zeros() {
  Params p;
  p.conv1_w = Matrix::Zero(kConv1Taps, kConv1Out);
  p.conv1_b = RowVector::Zero(kConv1Out);
  p.conv2_w = Matrix::Zero(kConv2Taps, kConv2Out);
  p.conv2_b = RowVector::Zero(kConv2Out);
  p.fc_w = Matrix::Zero(kConv2Out, kNumClasses);
  p.fc_b = RowVector::Zero(kNumClasses);
  return p;
}

std::size_t Params::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const char*, const auto&, const double*, Eigen::Index size) {
    n += static_cast<std::size_t>(size);
  });
  return n;
}

std::vector<LayerDesc> architecture() {
  std::vector<LayerDesc> out;
  Params::zeros().for_each_tensor([&](const char* name, const std::vector<std::uint32_t>& shape,
                                      const double*, Eigen::Index) {
    out.push_back({name, shape});
  });
  return out;
}

namespace {

std::vector<std::string> default_class_names() {
  std::vector<std::string> names;
  for (int c = 0; c < kNumClasses; ++c) names.emplace_back(class_name(static_cast<DistortionClass>(c)));
  return names;
}

}  // namespace

PatchClassifierModel PatchClassifierModel::zeros() {
  PatchClassifierModel m;
  m.params = Params::zeros();
  m.meta.classes = default_class_names();
  return m;
}

PatchClassifierModel PatchClassifierModel::initialized(std::uint64_t seed) {
  PatchClassifierModel m = zeros();
  m.meta.seed = seed;
  RngStream rng(seed, hash_string("init"));
  auto fill = [&](Matrix& w, int fan_in) {
    const double sd = std::sqrt(2.0 / fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * rng.normal();
  };
  fill(m.params.conv1_w, kConv1Taps);
  fill(m.params.conv2_w, kConv2Taps);
  fill(m.params.fc_w, kConv2Out);
  m.round_to_storage();
  return m;
}

void PatchClassifierModel::round_to_storage() {
  params.for_each_tensor([](const char*, const auto&, double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) data[i] = static_cast<double>(static_cast<float>(data[i]));
  });
}

void PatchBatch::add(std::span<const double> patch, int label) {
  if (patch.size() != static_cast<std::size_t>(kPatchValues)) throw Error("patch shape mismatch");
  data.insert(data.end(), patch.begin(), patch.end());
  labels.push_back(label);
}

void extract_patch(const ImageF& img, int x, int y, bool flip, std::span<double> dst) {
  if (img.channels() != kInChannels) throw Error("patch source must have 3 channels");
  if (x < 0 || y < 0 || x + kPatchSize > img.width() || y + kPatchSize > img.height()) {
    throw Error("patch window out of bounds");
  }
  if (dst.size() != static_cast<std::size_t>(kPatchValues)) throw Error("patch shape mismatch");
  for (int py = 0; py < kPatchSize; ++py) {
    auto src = img.row(y + py);
    double* out = dst.data() + py * kPatchSize * kInChannels;
    for (int px = 0; px < kPatchSize; ++px) {
      const int sx = x + (flip ? kPatchSize - 1 - px : px);
      for (int c = 0; c < kInChannels; ++c) out[px * kInChannels + c] = src[sx * kInChannels + c];
    }
  }
}

void normalize_patch(std::span<const double> patch, std::span<double> out) {
  constexpr int kPixels = kPatchSize * kPatchSize;
  if (patch.size() != static_cast<std::size_t>(kPatchValues) || out.size() != patch.size()) {
    throw Error("patch shape mismatch");
  }
  std::array<double, kInChannels> mean{};
  for (int i = 0; i < kPatchValues; ++i) mean[i % kInChannels] += patch[i];
  for (double& m : mean) m /= kPixels;
  double ss = 0.0;
  for (int i = 0; i < kPatchValues; ++i) {
    out[i] = patch[i] - mean[i % kInChannels];
    ss += out[i] * out[i];
  }
  const double scale = 1.0 / (std::sqrt(ss / kPatchValues) + kContrastEpsilon);
  for (double& v : out) v *= scale;
}

namespace {

struct ForwardState {
  Eigen::Index n = 0;
  Matrix x1;                   // n*676 x 147 im2col of the input
  Matrix z1;                   // n*676 x 16 conv1 pre-activations
  Matrix pooled;               // n*169 x 16
  std::vector<int> pool_from;  // z1 row chosen by each pooled entry
  Matrix x2;                   // n*121 x 144 im2col of the pooled map
  Matrix z2;                   // n*121 x 32
  Matrix gap;                  // n x 32
  Matrix logits;               // n x 9
};

void run_forward(const Params& p, std::span<const double> patches, ForwardState& s) {
  if (patches.size() % kPatchValues != 0) throw Error("patch batch shape mismatch");
  const Eigen::Index n = static_cast<Eigen::Index>(patches.size() / kPatchValues);
  s.n = n;

  s.x1.resize(n * kConv1Pixels, kConv1Taps);
  constexpr int kRowSpan = kConv1Kernel * kInChannels;
  std::vector<double> normalized(kPatchValues);
  for (Eigen::Index b = 0; b < n; ++b) {
    const double* patch = patches.data() + b * kPatchValues;
    normalize_patch(std::span<const double>(patch, kPatchValues), normalized);
    patch = normalized.data();
    for (int oy = 0; oy < kConv1Size; ++oy) {
      for (int ox = 0; ox < kConv1Size; ++ox) {
        double* row = s.x1.row(b * kConv1Pixels + oy * kConv1Size + ox).data();
        for (int ky = 0; ky < kConv1Kernel; ++ky) {
          std::memcpy(row + ky * kRowSpan,
                      patch + ((oy + ky) * kPatchSize + ox) * kInChannels,
                      sizeof(double) * kRowSpan);
        }
      }
    }
  }
  s.z1.noalias() = s.x1 * p.conv1_w;
  s.z1.rowwise() += p.conv1_b;

  s.pooled.resize(n * kPoolPixels, kConv1Out);
  s.pool_from.resize(static_cast<std::size_t>(n) * kPoolPixels * kConv1Out);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (int py = 0; py < kPoolSize; ++py) {
      for (int px = 0; px < kPoolSize; ++px) {
        const Eigen::Index prow = b * kPoolPixels + py * kPoolSize + px;
        for (int c = 0; c < kConv1Out; ++c) {
          double best = -1.0;
          int best_row = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int row = static_cast<int>(b * kConv1Pixels + (2 * py + dy) * kConv1Size + 2 * px + dx);
              const double v = std::max(0.0, s.z1(row, c));
              if (v > best) {
                best = v;
                best_row = row;
              }
            }
          }
          s.pooled(prow, c) = best;
          s.pool_from[static_cast<std::size_t>(prow) * kConv1Out + c] = best_row;
        }
      }
    }
  }

  s.x2.resize(n * kConv2Pixels, kConv2Taps);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (int oy = 0; oy < kConv2Size; ++oy) {
      for (int ox = 0; ox < kConv2Size; ++ox) {
        double* row = s.x2.row(b * kConv2Pixels + oy * kConv2Size + ox).data();
        for (int ky = 0; ky < kConv2Kernel; ++ky) {
          for (int kx = 0; kx < kConv2Kernel; ++kx) {
            const double* src = s.pooled.row(b * kPoolPixels + (oy + ky) * kPoolSize + ox + kx).data();
            std::memcpy(row + (ky * kConv2Kernel + kx) * kConv1Out, src, sizeof(double) * kConv1Out);
          }
        }
      }
    }
  }
  s.z2.noalias() = s.x2 * p.conv2_w;
  s.z2.rowwise() += p.conv2_b;

  s.gap.resize(n, kConv2Out);
  for (Eigen::Index b = 0; b < n; ++b) {
    s.gap.row(b) = s.z2.middleRows(b * kConv2Pixels, kConv2Pixels).cwiseMax(0.0).colwise().sum() /
                   static_cast<double>(kConv2Pixels);
  }
  s.logits.noalias() = s.gap * p.fc_w;
  s.logits.rowwise() += p.fc_b;
}

ClassProbs softmax_row(const Matrix& logits, Eigen::Index row) {
  ClassProbs out{};
  const double mx = logits.row(row).maxCoeff();
  double sum = 0.0;
  for (int k = 0; k < kNumClasses; ++k) {
    out[k] = std::exp(logits(row, k) - mx);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Returns the summed (not averaged) cross-entropy of a chunk and its
// gradient sum.
Gradients chunk_gradients(const Params& p, std::span<const double> patches, std::span<const int> labels) {
  ForwardState s;
  run_forward(p, patches, s);
  const Eigen::Index n = s.n;
  Gradients g;
  g.grad = Params::zeros();

  Matrix dlogits(n, kNumClasses);
  for (Eigen::Index b = 0; b < n; ++b) {
    const ClassProbs probs = softmax_row(s.logits, b);
    const int y = labels[b];
    if (y < 0 || y >= kNumClasses) throw Error("label out of range");
    const double mx = s.logits.row(b).maxCoeff();
    const double lse = mx + std::log((s.logits.row(b).array() - mx).exp().sum());
    g.loss += lse - s.logits(b, y);
    if (argmax_class(probs) == static_cast<DistortionClass>(y)) ++g.correct;
    for (int k = 0; k < kNumClasses; ++k) dlogits(b, k) = probs[k] - (k == y ? 1.0 : 0.0);
  }

  g.grad.fc_w.noalias() = s.gap.transpose() * dlogits;
  g.grad.fc_b = dlogits.colwise().sum();
  const Matrix dgap = dlogits * p.fc_w.transpose();

  Matrix dz2(n * kConv2Pixels, kConv2Out);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (int r = 0; r < kConv2Pixels; ++r) {
      const Eigen::Index row = b * kConv2Pixels + r;
      for (int c = 0; c < kConv2Out; ++c) {
        dz2(row, c) = s.z2(row, c) > 0.0 ? dgap(b, c) / kConv2Pixels : 0.0;
      }
    }
  }
  g.grad.conv2_w.noalias() = s.x2.transpose() * dz2;
  g.grad.conv2_b = dz2.colwise().sum();
  const Matrix dx2 = dz2 * p.conv2_w.transpose();

  Matrix dpooled = Matrix::Zero(n * kPoolPixels, kConv1Out);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (int oy = 0; oy < kConv2Size; ++oy) {
      for (int ox = 0; ox < kConv2Size; ++ox) {
        const double* src = dx2.row(b * kConv2Pixels + oy * kConv2Size + ox).data();
        for (int ky = 0; ky < kConv2Kernel; ++ky) {
          for (int kx = 0; kx < kConv2Kernel; ++kx) {
            double* dst = dpooled.row(b * kPoolPixels + (oy + ky) * kPoolSize + ox + kx).data();
            const double* s_k = src + (ky * kConv2Kernel + kx) * kConv1Out;
            for (int c = 0; c < kConv1Out; ++c) dst[c] += s_k[c];
          }
        }
      }
    }
  }

  Matrix dz1 = Matrix::Zero(n * kConv1Pixels, kConv1Out);
  for (Eigen::Index prow = 0; prow < n * kPoolPixels; ++prow) {
    for (int c = 0; c < kConv1Out; ++c) {
      const int row = s.pool_from[static_cast<std::size_t>(prow) * kConv1Out + c];
      if (s.z1(row, c) > 0.0) dz1(row, c) += dpooled(prow, c);
    }
  }
  g.grad.conv1_w.noalias() = s.x1.transpose() * dz1;
  g.grad.conv1_b = dz1.colwise().sum();
  return g;
}

void add_params(Params& acc, const Params& x) {
  acc.conv1_w += x.conv1_w;
  acc.conv1_b += x.conv1_b;
  acc.conv2_w += x.conv2_w;
  acc.conv2_b += x.conv2_b;
  acc.fc_w += x.fc_w;
  acc.fc_b += x.fc_b;
}

void scale_params(Params& p, double s) {
  p.conv1_w *= s;
  p.conv1_b *= s;
  p.conv2_w *= s;
  p.conv2_b *= s;
  p.fc_w *= s;
  p.fc_b *= s;
}

}  // namespace

std::vector<ClassProbs> forward_batch(const PatchClassifierModel& model, std::span<const double> patches) {
  ForwardState s;
  run_forward(model.params, patches, s);
  std::vector<ClassProbs> out(static_cast<std::size_t>(s.n));
  for (Eigen::Index b = 0; b < s.n; ++b) out[b] = softmax_row(s.logits, b);
  return out;
}

ClassProbs forward(const PatchClassifierModel& model, std::span<const double> patch) {
  if (patch.size() != static_cast<std::size_t>(kPatchValues)) throw Error("patch shape mismatch");
  return forward_batch(model, patch).front();
}

ClassProbs forward(const PatchClassifierModel& model, const ImageF& patch) {
  if (patch.width() != kPatchSize || patch.height() != kPatchSize || patch.channels() != kInChannels) {
    throw Error("patch shape mismatch: expected 32x32x3");
  }
  return forward(model, patch.data());
}

double batch_loss(const PatchClassifierModel& model, const PatchBatch& batch) {
  if (batch.labels.size() != batch.size() || batch.size() == 0) throw Error("batch shape mismatch");
  ForwardState s;
  run_forward(model.params, batch.data, s);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < s.n; ++b) {
    const double mx = s.logits.row(b).maxCoeff();
    loss += mx + std::log((s.logits.row(b).array() - mx).exp().sum()) - s.logits(b, batch.labels[b]);
  }
  return loss / static_cast<double>(s.n);
}

Gradients backward(const PatchClassifierModel& model, const PatchBatch& batch, int threads) {
  const std::size_t n = batch.size();
  if (n == 0 || batch.labels.size() != n || batch.data.size() != n * kPatchValues) {
    throw Error("batch shape mismatch");
  }
  const std::size_t chunks = (n + kGradChunk - 1) / kGradChunk;
  std::vector<Gradients> partial(chunks);
  parallel_for(chunks, threads, [&](std::size_t k) {
    const std::size_t lo = k * kGradChunk;
    const std::size_t hi = std::min(n, lo + kGradChunk);
    partial[k] = chunk_gradients(
        model.params,
        std::span<const double>(batch.data).subspan(lo * kPatchValues, (hi - lo) * kPatchValues),
        std::span<const int>(batch.labels).subspan(lo, hi - lo));
  });
  Gradients out = std::move(partial[0]);
  for (std::size_t k = 1; k < chunks; ++k) {
    add_params(out.grad, partial[k].grad);
    out.loss += partial[k].loss;
    out.correct += partial[k].correct;
  }
  scale_params(out.grad, 1.0 / static_cast<double>(n));
  out.loss /= static_cast<double>(n);
  if (!std::isfinite(out.loss)) throw Error("non-finite loss");
  return out;
}

void sgd_step(PatchClassifierModel& model, const Params& grad, double lr, double momentum,
              Params& velocity) {
  scale_params(velocity, momentum);
  add_params(velocity, grad);
  Params step = velocity;
  scale_params(step, -lr);
  add_params(model.params, step);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || momentum < 0.0 || momentum >= 1.0 || batch_size < 1 || epochs < 1 ||
      patches_per_image < 1) {
    throw Error("invalid training hyperparameters");
  }
}

TrainingSet load_training_set(const std::filesystem::path& manifest, Split split) {
  const auto records = read_manifest(manifest);
  const auto base = manifest.parent_path();
  TrainingSet set;
  bool first = true;
  for (const auto& rec : records) {
    if (rec.split != split) continue;
    if (first) {
      set.task = rec.task;
      first = false;
    } else if (rec.task != set.task) {
      throw Error("manifest mixes classification and detection records");
    }
    ImageF img = to_three_channels(to_real(load_image(base / rec.file)));
    if (img.width() < kPatchSize || img.height() < kPatchSize) {
      throw Error("training image smaller than a patch: " + rec.file);
    }
    set.images.push_back(std::move(img));
    if (rec.task == Task::kClassification) {
      set.labels.push_back(rec.spec.cls);
    } else {
      set.regions.push_back(rec.regions);
    }
  }
  if (set.images.empty()) {
    throw Error("no records in split '" + std::string(split_name(split)) + "' of " + manifest.string());
  }
  return set;
}

int detection_patch_label(const std::vector<RegionAnnotation>& regions, int x, int y, bool label_straddlers) {
  const int cx = x + kPatchSize / 2;
  const int cy = y + kPatchSize / 2;
  for (const auto& r : regions) {
    if (cx >= r.rect.x && cx < r.rect.right() && cy >= r.rect.y && cy < r.rect.bottom()) {
      return class_code(r.spec.cls);
    }
  }
  if (!label_straddlers) {
    const Rect window{x, y, kPatchSize, kPatchSize};
    for (const auto& r : regions) {
      if (intersection_area(window, r.rect) > 0) return -1;
    }
  }
  return class_code(DistortionClass::kPristine);
}

std::vector<PatchRef> epoch_samples(const TrainingSet& set, const TrainConfig& cfg, int epoch) {
  std::vector<PatchRef> out;
  out.reserve(set.images.size() * cfg.patches_per_image * (cfg.horizontal_flip ? 2 : 1));
  auto push = [&](PatchRef r) {
    out.push_back(r);
    if (cfg.horizontal_flip) {
      r.flip = true;
      out.push_back(r);
    }
  };
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const ImageF& img = set.images[i];
    const int max_x = img.width() - kPatchSize;
    const int max_y = img.height() - kPatchSize;
    RngStream rng(cfg.seed, hash_combine(static_cast<std::uint64_t>(epoch), i));
    for (int k = 0; k < cfg.patches_per_image; ++k) {
      PatchRef ref;
      ref.image = static_cast<std::uint32_t>(i);
      if (set.task == Task::kClassification) {
        ref.x = static_cast<int>(rng.uniform_int(0, max_x));
        ref.y = static_cast<int>(rng.uniform_int(0, max_y));
        ref.label = class_code(set.labels[i]);
        push(ref);
        continue;
      }
      // Detection: half the draws centre on a random region so small regions
      // are represented; straddling windows are redrawn a bounded number of times.
      const auto& regions = set.regions[i];
      for (int attempt = 0; attempt < 16; ++attempt) {
        if (!regions.empty() && rng.uniform() < 0.5) {
          const Rect& r = regions[rng.uniform_int(0, static_cast<std::int64_t>(regions.size()) - 1)].rect;
          const int cx = static_cast<int>(rng.uniform_int(r.x, r.right() - 1));
          const int cy = static_cast<int>(rng.uniform_int(r.y, r.bottom() - 1));
          ref.x = std::clamp(cx - kPatchSize / 2, 0, max_x);
          ref.y = std::clamp(cy - kPatchSize / 2, 0, max_y);
        } else {
          ref.x = static_cast<int>(rng.uniform_int(0, max_x));
          ref.y = static_cast<int>(rng.uniform_int(0, max_y));
        }
        ref.label = detection_patch_label(regions, ref.x, ref.y, cfg.label_straddlers);
        if (ref.label >= 0) {
          push(ref);
          break;
        }
      }
    }
  }
  RngStream shuffle(cfg.seed, hash_combine(static_cast<std::uint64_t>(epoch), hash_string("shuffle")));
  for (std::size_t i = out.size(); i > 1; --i) {
    std::swap(out[i - 1], out[shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
  }
  return out;
}

namespace {

PatchBatch make_batch(const TrainingSet& set, std::span<const PatchRef> refs) {
  PatchBatch batch;
  batch.data.resize(refs.size() * kPatchValues);
  batch.labels.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    extract_patch(set.images[refs[i].image], refs[i].x, refs[i].y, refs[i].flip,
                  std::span<double>(batch.data).subspan(i * kPatchValues, kPatchValues));
    batch.labels.push_back(refs[i].label);
  }
  return batch;
}

}  // namespace

TrainResult train(const TrainingSet& set, const TrainConfig& cfg) {
  cfg.validate();
  if (set.images.empty()) throw Error("empty training split");
  TrainResult result;
  result.model = PatchClassifierModel::initialized(cfg.seed);
  result.model.meta.epochs = cfg.epochs;
  Params velocity = Params::zeros();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto samples = epoch_samples(set, cfg, epoch);
    if (samples.empty()) throw Error("epoch produced no training patches");
    if (epoch == 1) {
      // Loss of the untrained model, for the training curve.
      const std::size_t n = std::min<std::size_t>(samples.size(), 256);
      const PatchBatch probe = make_batch(set, std::span<const PatchRef>(samples).first(n));
      const Gradients g0 = backward(result.model, probe, cfg.threads);
      result.curve.push_back({0, g0.loss, static_cast<double>(g0.correct) / static_cast<double>(n)});
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < samples.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(samples.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      const PatchBatch batch = make_batch(set, std::span<const PatchRef>(samples).subspan(lo, hi - lo));
      Gradients g;
      try {
        g = backward(result.model, batch, cfg.threads);
      } catch (const Error& e) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ", sample " +
                    std::to_string(lo) + ": " + e.what());
      }
      loss_sum += g.loss * static_cast<double>(hi - lo);
      correct += static_cast<std::size_t>(g.correct);
      sgd_step(result.model, g.grad, cfg.learning_rate, cfg.momentum, velocity);
    }
    result.curve.push_back({epoch, loss_sum / static_cast<double>(samples.size()),
                            static_cast<double>(correct) / static_cast<double>(samples.size())});
  }
  result.model.round_to_storage();
  return result;
}

TrainResult train(const std::filesystem::path& manifest, const TrainConfig& cfg) {
  return train(load_training_set(manifest, Split::kTrain), cfg);
}

void write_training_curve(const std::filesystem::path& path, const std::vector<EpochStats>& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,loss,train_accuracy\n";
  out.precision(10);
  for (const auto& e : curve) out << e.epoch << ',' << e.loss << ',' << e.accuracy << '\n';
}

DistortionClass argmax_class(const ClassProbs& p) {
  int best = 0;
  for (int k = 1; k < kNumClasses; ++k) {
    if (p[k] > p[best]) best = k;
  }
  return static_cast<DistortionClass>(best);
}

Classification classify_image(const PatchClassifierModel& model, const ImageF& img, int threads) {
  if (img.width() < kPatchSize || img.height() < kPatchSize) {
    throw Error("image smaller than 32x32");
  }
  const ImageF rgb = to_three_channels(img);
  constexpr int kGrid = 5;
  std::vector<double> patches(static_cast<std::size_t>(kGrid) * kGrid * kPatchValues);
  for (int gy = 0; gy < kGrid; ++gy) {
    for (int gx = 0; gx < kGrid; ++gx) {
      const int x = static_cast<int>(std::lround(gx * (rgb.width() - kPatchSize) / double(kGrid - 1)));
      const int y = static_cast<int>(std::lround(gy * (rgb.height() - kPatchSize) / double(kGrid - 1)));
      extract_patch(rgb, x, y, false,
                    std::span<double>(patches).subspan((gy * kGrid + gx) * kPatchValues, kPatchValues));
    }
  }
  // One row of the grid per task.
  std::vector<std::vector<ClassProbs>> rows(kGrid);
  parallel_for(kGrid, threads, [&](std::size_t r) {
    rows[r] = forward_batch(model, std::span<const double>(patches).subspan(r * kGrid * kPatchValues,
                                                                            kGrid * kPatchValues));
  });
  Classification out;
  for (const auto& row : rows) {
    for (const auto& p : row) {
      for (int k = 0; k < kNumClasses; ++k) out.probs[k] += p[k];
    }
  }
  for (double& v : out.probs) v /= kGrid * kGrid;
  out.cls = argmax_class(out.probs);
  out.confidence = out.probs[class_code(out.cls)];
  return out;
}

std::vector<int> window_positions(int extent, int stride) {
  if (stride < 1) throw Error("stride must be positive");
  if (extent < kPatchSize) throw Error("image smaller than 32x32");
  std::vector<int> out;
  for (int p = 0; p + kPatchSize <= extent; p += stride) out.push_back(p);
  if (out.back() != extent - kPatchSize) out.push_back(extent - kPatchSize);
  return out;
}

ProbMaps score_windows(const PatchClassifierModel& model, const ImageF& img, const DetectConfig& cfg) {
  const ImageF rgb = to_three_channels(img);
  ProbMaps maps;
  maps.image_width = rgb.width();
  maps.image_height = rgb.height();
  maps.xs = window_positions(rgb.width(), cfg.stride);
  maps.ys = window_positions(rgb.height(), cfg.stride);
  maps.probs.resize(maps.xs.size() * maps.ys.size());
  parallel_for(maps.ys.size(), cfg.threads, [&](std::size_t gy) {
    std::vector<double> patches(maps.xs.size() * kPatchValues);
    for (std::size_t gx = 0; gx < maps.xs.size(); ++gx) {
      extract_patch(rgb, maps.xs[gx], maps.ys[gy], false,
                    std::span<double>(patches).subspan(gx * kPatchValues, kPatchValues));
    }
    const auto row = forward_batch(model, patches);
    std::copy(row.begin(), row.end(), maps.probs.begin() + static_cast<std::ptrdiff_t>(gy * maps.xs.size()));
  });
  return maps;
}

// Median over the component's rows (or columns) of the threshold crossing,
// linearly interpolated between the outermost member window and its outside
// neighbour along the scan axis.
template <class Prob>
int refined_edge(const std::vector<std::pair<int, int>>& cells, const std::vector<int>& origins, int n,
                 double threshold, bool vertical, bool high, Prob prob) {
  std::map<int, int> extreme;  // line -> outermost grid index
  for (const auto& [x, y] : cells) {
    const int line = vertical ? x : y, g = vertical ? y : x;
    auto [it, fresh] = extreme.emplace(line, g);
    if (!fresh) it->second = high ? std::max(it->second, g) : std::min(it->second, g);
  }
  const int half = kPatchSize / 2;
  std::vector<double> crossings;
  crossings.reserve(extreme.size());
  for (const auto& [line, g] : extreme) {
    const int out = high ? g + 1 : g - 1;
    const double c_in = origins[g] + half;
    if (out < 0 || out >= n) {
      crossings.push_back(high ? c_in + half : c_in - half);
      continue;
    }
    const double p_in = vertical ? prob(line, g) : prob(g, line);
    const double p_out = vertical ? prob(line, out) : prob(out, line);
    const double t = p_in > p_out ? std::clamp((p_in - threshold) / (p_in - p_out), 0.0, 1.0) : 0.5;
    crossings.push_back(c_in + t * (origins[out] + half - c_in));
  }
  auto mid = crossings.begin() + static_cast<std::ptrdiff_t>(crossings.size() / 2);
  std::nth_element(crossings.begin(), mid, crossings.end());
  return static_cast<int>(std::lround(*mid));
}

std::vector<ScoredBox> boxes_from_maps(const ProbMaps& maps, const DetectConfig& cfg) {
  const int nx = static_cast<int>(maps.xs.size());
  const int ny = static_cast<int>(maps.ys.size());
  const int half = kPatchSize / 2;
  std::vector<ScoredBox> boxes;
  std::vector<int> label(static_cast<std::size_t>(nx) * ny);
  std::vector<std::pair<int, int>> stack, cells;
  for (DistortionClass cls : kDistortionClasses) {
    const int k = class_code(cls);
    std::fill(label.begin(), label.end(), 0);
    for (int sy = 0; sy < ny; ++sy) {
      for (int sx = 0; sx < nx; ++sx) {
        if (label[sy * nx + sx] || maps.at(sx, sy)[k] < cfg.threshold) continue;
        int gx0 = sx, gx1 = sx, gy0 = sy, gy1 = sy;
        double sum = 0.0;
        int count = 0;
        label[sy * nx + sx] = 1;
        stack.assign(1, {sx, sy});
        cells.clear();
        while (!stack.empty()) {
          const auto [x, y] = stack.back();
          stack.pop_back();
          sum += maps.at(x, y)[k];
          ++count;
          cells.emplace_back(x, y);
          gx0 = std::min(gx0, x);
          gx1 = std::max(gx1, x);
          gy0 = std::min(gy0, y);
          gy1 = std::max(gy1, y);
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int ux = x + dx, uy = y + dy;
              if (ux < 0 || uy < 0 || ux >= nx || uy >= ny || label[uy * nx + ux]) continue;
              if (maps.at(ux, uy)[k] < cfg.threshold) continue;
              label[uy * nx + ux] = 1;
              stack.emplace_back(ux, uy);
            }
          }
        }
        // Border windows extend the box to the image edge.
        int left, top, right, bottom;
        if (cfg.refine_edges) {
          const auto p = [&](int x, int y) { return maps.at(x, y)[k]; };
          left = gx0 == 0 ? 0 : refined_edge(cells, maps.xs, nx, cfg.threshold, false, false, p);
          top = gy0 == 0 ? 0 : refined_edge(cells, maps.ys, ny, cfg.threshold, true, false, p);
          right = gx1 == nx - 1 ? maps.image_width : refined_edge(cells, maps.xs, nx, cfg.threshold, false, true, p);
          bottom = gy1 == ny - 1 ? maps.image_height : refined_edge(cells, maps.ys, ny, cfg.threshold, true, true, p);
          left = std::max(0, left);
          top = std::max(0, top);
          right = std::min(maps.image_width, right);
          bottom = std::min(maps.image_height, bottom);
        } else {
          left = gx0 == 0 ? 0 : std::max(0, maps.xs[gx0] + half - cfg.box_margin);
          top = gy0 == 0 ? 0 : std::max(0, maps.ys[gy0] + half - cfg.box_margin);
          right = gx1 == nx - 1 ? maps.image_width
                                : std::min(maps.image_width, maps.xs[gx1] + half + cfg.box_margin);
          bottom = gy1 == ny - 1 ? maps.image_height
                                 : std::min(maps.image_height, maps.ys[gy1] + half + cfg.box_margin);
        }
        if (right <= left || bottom <= top) continue;
        boxes.push_back({Rect{left, top, right - left, bottom - top}, cls,
                         std::clamp(sum / count, 0.0, 1.0)});
      }
    }
  }
  return non_max_suppression(std::move(boxes), cfg.nms_iou);
}

std::vector<ScoredBox> non_max_suppression(std::vector<ScoredBox> boxes, double iou_threshold) {
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
  std::vector<ScoredBox> kept;
  for (const auto& b : boxes) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const ScoredBox& k) {
      return iou(k.rect, b.rect) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

std::vector<ScoredBox> detect(const PatchClassifierModel& model, const ImageF& img, const DetectConfig& cfg) {
  if (img.width() < kPatchSize || img.height() < kPatchSize) throw Error("image smaller than 32x32");
  return boxes_from_maps(score_windows(model, img, cfg), cfg);
}

namespace {

constexpr char kMagic[4] = {'D', 'D', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::vector<char> bytes;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > 4096) throw Error(name_ + ": corrupt string length");
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw Error(name_ + ": truncated model file header (expected at least " +
                  std::to_string(pos_ + n) + " bytes, got " + std::to_string(data_.size()) + ")");
    }
  }
  std::vector<char> data_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const PatchClassifierModel& model, const std::filesystem::path& path) {
  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
  w.u32(kVersion);
  const auto arch = architecture();
  w.u32(static_cast<std::uint32_t>(arch.size()));
  for (const auto& layer : arch) {
    w.str(layer.name);
    w.u32(static_cast<std::uint32_t>(layer.shape.size()));
    for (auto d : layer.shape) w.u32(d);
  }
  w.u32(static_cast<std::uint32_t>(model.meta.patch_size));
  w.u32(static_cast<std::uint32_t>(model.meta.classes.size()));
  for (const auto& c : model.meta.classes) w.str(c);
  w.u64(model.meta.seed);
  w.u32(static_cast<std::uint32_t>(model.meta.epochs));
  model.params.for_each_tensor([&](const char*, const auto&, const double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) w.f32(static_cast<float>(data[i]));
  });
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model " + path.string());
  out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw Error("cannot write model " + path.string());
}

PatchClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model " + path.string());
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string name = path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(name + ": bad magic (not a DDM1 model)");
  }
  Reader r(std::move(bytes), name);
  r.skip(4);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw Error(name + ": unsupported model version " + std::to_string(version));
  const auto arch = architecture();
  const std::uint32_t n_tensors = r.u32();
  if (n_tensors != arch.size()) throw Error(name + ": unexpected tensor count " + std::to_string(n_tensors));
  std::size_t n_values = 0;
  for (const auto& layer : arch) {
    const std::string tensor = r.str();
    const std::uint32_t ndims = r.u32();
    if (ndims > 8) throw Error(name + ": corrupt shape table");
    std::vector<std::uint32_t> shape(ndims);
    for (auto& d : shape) d = r.u32();
    if (tensor != layer.name || shape != layer.shape) {
      throw Error(name + ": shape table does not match architecture at tensor '" + tensor + "'");
    }
    std::size_t count = 1;
    for (auto d : shape) count *= d;
    n_values += count;
  }
  PatchClassifierModel model = PatchClassifierModel::zeros();
  model.meta.patch_size = static_cast<int>(r.u32());
  if (model.meta.patch_size != kPatchSize) throw Error(name + ": unsupported patch size");
  const std::uint32_t n_classes = r.u32();
  if (n_classes != kNumClasses) throw Error(name + ": unexpected class count");
  model.meta.classes.clear();
  for (std::uint32_t i = 0; i < n_classes; ++i) model.meta.classes.push_back(r.str());
  model.meta.seed = r.u64();
  model.meta.epochs = static_cast<int>(r.u32());
  const std::size_t expected = r.pos() + 4 * n_values;
  if (r.size() != expected) {
    throw Error(name + ": " + (r.size() < expected ? "truncated" : "oversized") +
                " model file: expected " + std::to_string(expected) + " bytes, got " +
                std::to_string(r.size()));
  }
  model.params.for_each_tensor([&](const char* tensor, const auto&, double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const float v = r.f32();
      if (!std::isfinite(v)) throw Error(name + ": non-finite value in " + tensor);
      data[i] = v;
    }
  });
  return model;
}

}  // namespace ddx
