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

#include "ddx/evalmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace ddx {

double iou(const Rect& a, const Rect& b) {
  const std::int64_t inter = intersection_area(a, b);
  const std::int64_t uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

MatchResult match_detections(std::span<const ScoredBox> preds, std::span<const Rect> gts,
                             double iou_threshold) {
  MatchResult out{std::vector<bool>(preds.size(), false), std::vector<bool>(gts.size(), false)};
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  for (std::size_t p : order) {
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (out.gt_matched[g]) continue;
      const double v = iou(preds[p].rect, gts[g]);
      if (v > best) {
        best = v;
        best_gt = g;
      }
    }
    if (best_gt < gts.size() && best >= iou_threshold) {
      out.gt_matched[best_gt] = true;
      out.pred_tp[p] = true;
    }
  }
  return out;
}

std::optional<double> average_precision(std::span<const RankedPrediction> preds, std::size_t n_gt) {
  if (n_gt == 0) return std::nullopt;
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  std::vector<double> precision(order.size()), recall(order.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (preds[order[k]].tp) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  for (std::size_t k = order.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

namespace {

struct ClassView {
  std::vector<ScoredBox> preds;
  std::vector<Rect> gts;
};

ClassView class_view(const ImageEval& img, DistortionClass cls) {
  ClassView v;
  for (const auto& p : img.preds) {
    if (p.cls == cls) v.preds.push_back(p);
  }
  for (const auto& g : img.gts) {
    if (g.spec.cls == cls) v.gts.push_back(g.rect);
  }
  return v;
}

}  // namespace

std::vector<ApResult> mean_ap(std::span<const ImageEval> images, std::span<const double> thresholds) {
  std::vector<ApResult> out;
  for (double thr : thresholds) {
    ApResult res;
    res.threshold = thr;
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < kNumDistortionClasses; ++c) {
      const DistortionClass cls = kDistortionClasses[c];
      std::vector<RankedPrediction> ranked;
      std::size_t n_gt = 0;
      for (const auto& img : images) {
        const ClassView v = class_view(img, cls);
        n_gt += v.gts.size();
        const MatchResult m = match_detections(v.preds, v.gts, thr);
        for (std::size_t p = 0; p < v.preds.size(); ++p) ranked.push_back({v.preds[p].score, m.pred_tp[p]});
      }
      res.per_class[c] = average_precision(ranked, n_gt);
      if (res.per_class[c]) {
        sum += *res.per_class[c];
        ++present;
      } else {
        res.notes.push_back("class '" + std::string(class_name(cls)) + "' has no ground truth; excluded from mAP");
      }
    }
    if (present > 0) res.map = sum / present;
    out.push_back(std::move(res));
  }
  return out;
}

ClassificationEval classification_accuracy(
    std::span<const std::pair<DistortionClass, DistortionClass>> truth_pred) {
  ClassificationEval e;
  for (const auto& [truth, pred] : truth_pred) {
    ++e.confusion[class_code(truth)][class_code(pred)];
    ++e.total;
    if (truth == pred) ++e.correct;
  }
  e.accuracy = e.total > 0 ? static_cast<double>(e.correct) / static_cast<double>(e.total) : 0.0;
  return e;
}

std::vector<SizeBucket> size_bucketed_recall(std::span<const ImageEval> images, double iou_threshold,
                                             std::span<const double> edges) {
  if (edges.size() < 2) throw Error("size buckets need at least two edges");
  std::vector<SizeBucket> buckets(edges.size() - 1);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    if (!(edges[b] < edges[b + 1])) throw Error("size bucket edges must increase");
    buckets[b].lo = edges[b];
    buckets[b].hi = edges[b + 1];
  }
  for (const auto& img : images) {
    for (DistortionClass cls : kDistortionClasses) {
      const ClassView v = class_view(img, cls);
      if (v.gts.empty()) continue;
      const MatchResult m = match_detections(v.preds, v.gts, iou_threshold);
      for (std::size_t g = 0; g < v.gts.size(); ++g) {
        const double ratio = std::sqrt(static_cast<double>(v.gts[g].area())) / img.image_size;
        if (ratio < edges.front() || ratio > edges.back()) continue;
        std::size_t b = 0;
        while (b + 1 < buckets.size() && ratio >= buckets[b].hi) ++b;
        ++buckets[b].gts;
        if (m.gt_matched[g]) ++buckets[b].matched;
      }
    }
  }
  for (auto& b : buckets) {
    if (b.gts > 0) b.recall = static_cast<double>(b.matched) / static_cast<double>(b.gts);
  }
  return buckets;
}

TransferTable transfer_matrix(const std::array<std::array<std::vector<ImageEval>, 2>, 2>& evals,
                              std::span<const double> thresholds) {
  TransferTable t;
  t.thresholds.assign(thresholds.begin(), thresholds.end());
  for (int train = 0; train < 2; ++train) {
    for (int test = 0; test < 2; ++test) {
      if (evals[train][test].empty()) throw Error("transfer cell has no evaluation images");
      for (const auto& r : mean_ap(evals[train][test], thresholds)) t.cells[train][test].push_back(r.map);
    }
  }
  return t;
}

namespace {

std::string fmt_metric(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

std::string fmt_threshold(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "@%g", t);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string csv_metric(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

}  // namespace

std::string format_map_row(const std::string& label, const std::vector<ApResult>& results) {
  std::string row = pad(label, 24);
  for (const auto& r : results) row += " | " + pad(fmt_metric(r.map), 6);
  return row;
}

std::string format_map_table(const std::string& label, const std::vector<ApResult>& results) {
  std::ostringstream out;
  std::string header = pad("Method", 24);
  for (const auto& r : results) header += " | " + pad(fmt_threshold(r.threshold), 6);
  out << pad("", 24) << " | mAP, IoU:\n" << header << "\n" << std::string(header.size(), '-') << "\n";
  out << format_map_row(label, results) << "\n";
  out << "# AP: all-point interpolation; mAP averages classes present in ground truth\n";
  for (const auto& r : results) {
    for (const auto& n : r.notes) out << "# " << fmt_threshold(r.threshold) << ": " << n << "\n";
  }
  return out.str();
}

std::string format_classification_table(const std::string& label, const ClassificationEval& eval) {
  std::ostringstream out;
  out << pad("Method", 24) << " | Accuracy\n" << std::string(35, '-') << "\n";
  out << pad(label, 24) << " | " << fmt_metric(eval.accuracy) << "\n";
  return out.str();
}

std::string format_confusion(const ClassificationEval& eval) {
  std::ostringstream out;
  out << pad("true\\pred", 13);
  for (int p = 0; p < kNumClasses; ++p) out << pad(std::string(class_name(static_cast<DistortionClass>(p))), 13);
  out << "\n";
  for (int t = 0; t < kNumClasses; ++t) {
    out << pad(std::string(class_name(static_cast<DistortionClass>(t))), 13);
    for (int p = 0; p < kNumClasses; ++p) out << pad(std::to_string(eval.confusion[t][p]), 13);
    out << "\n";
  }
  return out.str();
}

std::string format_transfer_table(const TransferTable& table) {
  std::ostringstream out;
  std::string header = pad("Train data -> Test data", 24);
  for (double t : table.thresholds) header += " | " + pad(fmt_threshold(t), 6);
  out << pad("", 24) << " | mAP, IoU:\n" << header << "\n" << std::string(header.size(), '-') << "\n";
  const char* names[2] = {"basic", "difficult"};
  for (int train = 0; train < 2; ++train) {
    for (int test = 0; test < 2; ++test) {
      std::string row = pad(std::string(names[train]) + " -> " + names[test], 24);
      for (const auto& v : table.cells[train][test]) row += " | " + pad(fmt_metric(v), 6);
      out << row << "\n";
    }
  }
  return out.str();
}

std::string map_csv(const std::vector<ApResult>& results) {
  std::ostringstream out;
  out << "iou_threshold,class,ap\n";
  for (const auto& r : results) {
    for (int c = 0; c < kNumDistortionClasses; ++c) {
      out << r.threshold << ',' << class_name(kDistortionClasses[c]) << ',' << csv_metric(r.per_class[c]) << '\n';
    }
    out << r.threshold << ",mAP," << csv_metric(r.map) << '\n';
  }
  return out.str();
}

std::string size_buckets_csv(const std::vector<SizeBucket>& buckets) {
  std::ostringstream out;
  out << "bucket_lo,bucket_hi,gt_count,matched,recall\n";
  for (const auto& b : buckets) {
    out << b.lo << ',' << b.hi << ',' << b.gts << ',' << b.matched << ',' << csv_metric(b.recall) << '\n';
  }
  return out.str();
}

std::string transfer_csv(const TransferTable& table) {
  std::ostringstream out;
  out << "train,test,iou_threshold,map\n";
  const char* names[2] = {"basic", "difficult"};
  for (int train = 0; train < 2; ++train) {
    for (int test = 0; test < 2; ++test) {
      for (std::size_t k = 0; k < table.thresholds.size(); ++k) {
        out << names[train] << ',' << names[test] << ',' << table.thresholds[k] << ','
            << csv_metric(table.cells[train][test][k]) << '\n';
      }
    }
  }
  return out.str();
}

void write_predictions(const std::filesystem::path& path, const std::vector<ImagePredictions>& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write predictions " + path.string());
  for (const auto& p : preds) {
    nlohmann::ordered_json j;
    j["image"] = p.image;
    auto boxes = nlohmann::ordered_json::array();
    for (const auto& b : p.boxes) {
      boxes.push_back({{"class", class_name(b.cls)},
                       {"score", b.score},
                       {"x", b.rect.x},
                       {"y", b.rect.y},
                       {"w", b.rect.w},
                       {"h", b.rect.h}});
    }
    j["boxes"] = std::move(boxes);
    out << j.dump() << '\n';
  }
  if (!out) throw Error("cannot write predictions " + path.string());
}

std::vector<ImagePredictions> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open predictions " + path.string());
  std::vector<ImagePredictions> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& msg) -> Error {
      return Error(path.string() + ": line " + std::to_string(line_no) + ": " + msg);
    };
    try {
      const auto j = nlohmann::json::parse(line);
      ImagePredictions p;
      p.image = j.at("image").get<std::string>();
      for (const auto& b : j.at("boxes")) {
        const auto cls = parse_class(b.at("class").get<std::string>());
        if (!cls || *cls == DistortionClass::kPristine) throw fail("unknown class");
        ScoredBox box{{b.at("x").get<int>(), b.at("y").get<int>(), b.at("w").get<int>(), b.at("h").get<int>()},
                      *cls,
                      b.at("score").get<double>()};
        if (!box.rect.valid()) throw fail("box must have positive size");
        if (!(box.score >= 0.0 && box.score <= 1.0)) throw fail("score outside [0, 1]");
        p.boxes.push_back(box);
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("malformed record (") + e.what() + ")");
    }
  }
  return out;
}

std::vector<ImageEval> join_predictions(const std::vector<ManifestRecord>& records, Split split,
                                        const std::vector<ImagePredictions>& preds) {
  std::map<std::string, std::size_t> index;
  std::vector<ImageEval> out;
  for (const auto& rec : records) {
    if (rec.split != split || rec.task != Task::kDetection) continue;
    index[rec.file] = out.size();
    out.push_back({rec.file, rec.width, rec.regions, {}});
  }
  for (const auto& p : preds) {
    auto it = index.find(p.image);
    if (it == index.end()) throw Error("predictions reference unknown image '" + p.image + "'");
    auto& dst = out[it->second].preds;
    dst.insert(dst.end(), p.boxes.begin(), p.boxes.end());
  }
  return out;
}

}  // namespace ddx
