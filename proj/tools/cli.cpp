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

#include "cli.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ddx/dataset.hpp"
#include "ddx/detector.hpp"
#include "ddx/distortions.hpp"
#include "ddx/evalmap.hpp"
#include "ddx/parallel.hpp"

namespace ddx::cli {
namespace {

namespace fs = std::filesystem;

struct Globals {
  std::uint64_t seed = 1;
  int threads = 0;
  int verbose = 0;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

// Thrown by commands whose metric has no defined value.
struct UndefinedMetric {
  std::string what;
};

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(std::string("invalid ") + what + " list '" + text + "'");
    }
  }
  if (out.empty()) throw Error(std::string("empty ") + what + " list");
  return out;
}

std::vector<double> parse_thresholds(const std::string& text) {
  auto t = parse_list(text, "IoU threshold");
  for (double v : t)
    if (!(v > 0.0 && v <= 1.0)) throw Error("IoU thresholds must be in (0, 1]");
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

std::string split_histogram(const std::vector<ManifestRecord>& recs) {
  std::map<Split, std::size_t> n;
  for (const auto& r : recs) ++n[r.split];
  std::ostringstream s;
  s << "split train=" << n[Split::kTrain] << " val=" << n[Split::kVal] << " test=" << n[Split::kTest];
  return s.str();
}

void report_build(const BuildResult& res, Io io) {
  io.out << res.records.size() << " records\n";
  io.out << split_histogram(res.records) << "\n";
  if (!res.skipped.empty()) io.out << res.skipped.size() << " references skipped (see report.txt)\n";
  if (res.degradations > 0) io.out << res.degradations << " region-count degradations\n";
  io.out << "manifest " << res.manifest.string() << "\n";
  io.out << "manifest hash " << file_hash_hex(res.manifest) << "\n";
}

struct SplitFlags {
  std::string unit = "reference";
  double train = 0, val = 0, test = 0;

  SplitSpec resolve(SplitSpec spec, std::uint64_t seed) const {
    spec.unit = parse_unit(unit);
    spec.fractions = {train, val, test};
    spec.seed = seed;
    spec.validate();
    return spec;
  }
};

void add_split_flags(CLI::App* cmd, SplitFlags& f, const SplitSpec& defaults) {
  f.train = defaults.fractions[0];
  f.val = defaults.fractions[1];
  f.test = defaults.fractions[2];
  cmd->add_option("--unit", f.unit, "Split unit: reference or image")->check(CLI::IsMember({"reference", "image"}));
  cmd->add_option("--train", f.train, "Train fraction");
  cmd->add_option("--val", f.val, "Validation fraction");
  cmd->add_option("--test", f.test, "Test fraction");
}

struct DetectFlags {
  DetectConfig cfg;
  std::string iou = "0.5,0.75,0.9";
};

void add_detect_flags(CLI::App* cmd, DetectFlags& f) {
  cmd->add_option("--stride", f.cfg.stride, "Sliding-window stride in pixels")->check(CLI::PositiveNumber);
  cmd->add_option("--threshold", f.cfg.threshold, "Class probability threshold")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--nms", f.cfg.nms_iou, "Non-maximum suppression IoU")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--box-margin", f.cfg.box_margin, "Pixels added around activated window centres (with --coarse-boxes)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag_function("--coarse-boxes", [&f](std::int64_t) { f.cfg.refine_edges = false; },
                         "Skip sub-window edge refinement");
  cmd->add_option("--iou", f.iou, "Comma-separated IoU thresholds");
}

std::vector<ManifestRecord> split_records(const fs::path& manifest, Split split, Task task) {
  std::vector<ManifestRecord> out;
  for (auto& r : read_manifest(manifest)) {
    if (r.split != split) continue;
    if (r.task != task) throw Error("manifest " + manifest.string() + " holds " + std::string(task_name(r.task)) + " records");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ImagePredictions> detect_records(const PatchClassifierModel& model, const fs::path& manifest,
                                             const std::vector<ManifestRecord>& recs, DetectConfig cfg,
                                             int threads) {
  std::vector<ImagePredictions> preds(recs.size());
  cfg.threads = 1;
  const fs::path base = manifest.parent_path();
  parallel_for(recs.size(), threads, [&](std::size_t i) {
    preds[i].image = recs[i].file;
    preds[i].boxes = detect(model, to_real(load_image(base / recs[i].file)), cfg);
  });
  return preds;
}

std::vector<ImageEval> detection_evals(const PatchClassifierModel& model, const fs::path& manifest, Split split,
                                       const DetectConfig& cfg, int threads,
                                       std::vector<ImagePredictions>* keep = nullptr) {
  const auto recs = split_records(manifest, split, Task::kDetection);
  if (recs.empty()) throw UndefinedMetric{"no " + std::string(split_name(split)) + " records in " + manifest.string()};
  auto preds = detect_records(model, manifest, recs, cfg, threads);
  auto evals = join_predictions(recs, split, preds);
  if (keep) *keep = std::move(preds);
  return evals;
}

void require_defined(const std::vector<ApResult>& results) {
  for (const auto& r : results) {
    if (!r.map) throw UndefinedMetric{"mAP undefined: no ground-truth regions"};
  }
}

// --- subcommands ---------------------------------------------------------

int cmd_gen_class(const Globals& g, const fs::path& refs, const fs::path& out, const SplitFlags& sf, Io io) {
  BuildOptions opts;
  opts.threads = resolve_threads(g.threads);
  opts.warn = [&](const std::string& m) { io.err << "warning: " << m << "\n"; };
  report_build(build_classification_dataset(refs, out, sf.resolve(SplitSpec::classification(), g.seed), g.seed, opts), io);
  return kExitOk;
}

int cmd_gen_detect(const Globals& g, const fs::path& refs, const fs::path& out, const std::string& variant,
                   int per_ref, const SplitFlags& sf, Io io) {
  BuildOptions opts;
  opts.threads = resolve_threads(g.threads);
  opts.warn = [&](const std::string& m) { io.err << "warning: " << m << "\n"; };
  report_build(build_detection_dataset(refs, out, parse_variant(variant), per_ref,
                                       sf.resolve(SplitSpec::detection(), g.seed), g.seed, opts),
               io);
  return kExitOk;
}

int cmd_train(const Globals& g, const fs::path& manifest, const fs::path& model_path, TrainConfig cfg,
              bool no_flip, fs::path curve, Io io) {
  cfg.seed = g.seed;
  cfg.threads = resolve_threads(g.threads);
  cfg.horizontal_flip = !no_flip;
  const TrainResult res = train(manifest, cfg);
  save_model(res.model, model_path);
  if (curve.empty()) curve = fs::path(model_path.string() + ".curve.csv");
  write_training_curve(curve, res.curve);
  if (g.verbose > 0) {
    for (const auto& e : res.curve) io.out << "epoch " << e.epoch << " loss " << e.loss << " accuracy " << e.accuracy << "\n";
  }
  io.out << "trained " << cfg.epochs << " epochs, final loss " << res.curve.back().loss << ", train accuracy "
         << res.curve.back().accuracy << "\n";
  io.out << "model " << model_path.string() << "\n";
  io.out << "model hash " << file_hash_hex(model_path) << "\n";
  return kExitOk;
}

int cmd_eval_class(const Globals& g, const fs::path& manifest, const fs::path& model_path, const std::string& split,
                   const std::string& csv, Io io) {
  const PatchClassifierModel model = load_model(model_path);
  const auto recs = split_records(manifest, parse_split(split), Task::kClassification);
  if (recs.empty()) throw UndefinedMetric{"no " + split + " records in " + manifest.string()};
  std::vector<std::pair<DistortionClass, DistortionClass>> pairs(recs.size());
  parallel_for(recs.size(), resolve_threads(g.threads), [&](std::size_t i) {
    const ImageF img = to_real(load_image(manifest.parent_path() / recs[i].file));
    pairs[i] = {recs[i].spec.cls, classify_image(model, img).cls};
  });
  const ClassificationEval e = classification_accuracy(pairs);
  io.out << format_classification_table("patch-cnn", e) << "\n" << format_confusion(e);
  if (!csv.empty()) {
    std::ostringstream s;
    s << "total,correct,accuracy\n" << e.total << ',' << e.correct << ',' << e.accuracy << '\n';
    write_text(csv, s.str());
  }
  return kExitOk;
}

int cmd_eval_detect(const Globals& g, const fs::path& manifest, const fs::path& model_path, const std::string& split,
                    const DetectFlags& df, const std::string& preds_out, const std::string& csv, Io io) {
  const auto thresholds = parse_thresholds(df.iou);
  const PatchClassifierModel model = load_model(model_path);
  std::vector<ImagePredictions> preds;
  const auto evals = detection_evals(model, manifest, parse_split(split), df.cfg, resolve_threads(g.threads), &preds);
  if (!preds_out.empty()) write_predictions(preds_out, preds);
  const auto results = mean_ap(evals, thresholds);
  io.out << format_map_table("patch-cnn", results);
  if (!csv.empty()) write_text(csv, map_csv(results));
  require_defined(results);
  return kExitOk;
}

int cmd_transfer(const Globals& g, const std::array<std::string, 2>& models, const std::array<std::string, 2>& manifests,
                 const DetectFlags& df, const std::string& csv, Io io) {
  const auto thresholds = parse_thresholds(df.iou);
  std::array<std::array<std::vector<ImageEval>, 2>, 2> evals;
  for (int train = 0; train < 2; ++train) {
    const PatchClassifierModel model = load_model(models[train]);
    for (int test = 0; test < 2; ++test) {
      evals[train][test] = detection_evals(model, manifests[test], Split::kTest, df.cfg, resolve_threads(g.threads));
    }
  }
  const TransferTable table = transfer_matrix(evals, thresholds);
  io.out << format_transfer_table(table);
  if (!csv.empty()) write_text(csv, transfer_csv(table));
  for (const auto& row : table.cells)
    for (const auto& cell : row)
      for (const auto& v : cell)
        if (!v) throw UndefinedMetric{"transfer cell undefined: no ground-truth regions"};
  return kExitOk;
}

int cmd_report(const fs::path& manifest, const fs::path& predictions, const std::string& split,
               const std::string& map_iou, double size_iou, const std::string& edges_text, const fs::path& out_dir,
               Io io) {
  const auto thresholds = parse_thresholds(map_iou);
  const auto edges = parse_list(edges_text, "bucket edge");
  const auto recs = split_records(manifest, parse_split(split), Task::kDetection);
  if (recs.empty()) throw UndefinedMetric{"no " + split + " records in " + manifest.string()};
  const auto evals = join_predictions(recs, parse_split(split), read_predictions(predictions));
  const auto results = mean_ap(evals, thresholds);
  const auto buckets = size_bucketed_recall(evals, size_iou, edges);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  write_text(out_dir / "map.csv", map_csv(results));
  write_text(out_dir / "size_recall.csv", size_buckets_csv(buckets));
  io.out << format_map_table("patch-cnn", results) << "\n";
  io.out << "size ratio     | GTs   | matched | recall @" << size_iou << "\n";
  for (const auto& b : buckets) {
    char line[96];
    std::snprintf(line, sizeof line, "[%.2f, %.2f%c  | %-5zu | %-7zu | ", b.lo, b.hi,
                  &b == &buckets.back() ? ']' : ')', b.gts, b.matched);
    io.out << line << (b.recall ? std::to_string(*b.recall) : std::string("n/a")) << "\n";
  }
  io.out << "wrote " << (out_dir / "map.csv").string() << " and " << (out_dir / "size_recall.csv").string() << "\n";
  require_defined(results);
  return kExitOk;
}

int cmd_distort(const Globals& g, const fs::path& in, const fs::path& out, const std::string& type, int level,
                std::optional<double> param, Io io) {
  const auto cls = parse_class(type);
  if (!cls) throw Error("unknown distortion type '" + type + "'");
  DistortionSpec spec{*cls, 0.0};
  if (*cls != DistortionClass::kPristine) {
    if (param) {
      spec.param = *param;
    } else {
      if (level < 1 || level > 3) throw Error("--level must be 1, 2 or 3");
      spec.param = level_grid(*cls).levels[level - 1];
    }
  }
  RngStream rng(g.seed, hash_string("distort"));
  const ImageF img = to_real(load_image(in));
  std::string ext = out.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  const ImageFormat fmt = (ext == ".jpg" || ext == ".jpeg") ? ImageFormat::kJpeg : ImageFormat::kPng;
  save_image(to_u8(apply(img, spec, rng)), out, fmt);
  io.out << "applied " << class_name(spec.cls) << " param " << spec.param << " -> " << out.string() << "\n";
  return kExitOk;
}

int cmd_verify(const fs::path& manifest, Io io) {
  const VerifyReport rep = verify_manifest(manifest);
  io.out << rep.to_json() << "\n";
  return rep.ok() ? kExitOk : kExitError;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Io io{out, err};
  Globals g;
  CLI::App app{"Synthetic distortion datasets, patch classifier and detection evaluation", "ddx"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores; DDX_THREADS overrides)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", g.verbose, "More output");

  std::function<int()> action;

  // gen-class
  std::string refs, outdir;
  SplitFlags class_split;
  auto* gen_class = app.add_subcommand("gen-class", "Build the classification dataset");
  gen_class->add_option("--refs", refs, "Directory of reference images")->required();
  gen_class->add_option("--out", outdir, "Output directory")->required();
  add_split_flags(gen_class, class_split, SplitSpec::classification());
  gen_class->callback([&] { action = [&] { return cmd_gen_class(g, refs, outdir, class_split, io); }; });

  // gen-detect
  std::string variant = "basic";
  int per_ref = 20;
  SplitFlags det_split;
  auto* gen_detect = app.add_subcommand("gen-detect", "Build a detection dataset");
  gen_detect->add_option("--refs", refs, "Directory of reference images")->required();
  gen_detect->add_option("--out", outdir, "Output directory")->required();
  gen_detect->add_option("--variant", variant, "basic or difficult")->check(CLI::IsMember({"basic", "difficult"}));
  gen_detect->add_option("--per-ref", per_ref, "Images per reference")->check(CLI::PositiveNumber);
  add_split_flags(gen_detect, det_split, SplitSpec::detection());
  gen_detect->callback([&] {
    action = [&] { return cmd_gen_detect(g, refs, outdir, variant, per_ref, det_split, io); };
  });

  // train
  std::string manifest, model_path, curve;
  TrainConfig tcfg;
  bool no_flip = false;
  auto* train_cmd = app.add_subcommand("train", "Train the patch classifier on a manifest's train split");
  train_cmd->add_option("--manifest", manifest, "Manifest file")->required();
  train_cmd->add_option("--out", model_path, "Model file to write")->required();
  train_cmd->add_option("--epochs", tcfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tcfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--momentum", tcfg.momentum, "Momentum")->check(CLI::Range(0.0, 0.999));
  train_cmd->add_option("--batch-size", tcfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--patches-per-image", tcfg.patches_per_image, "Patches drawn per image per epoch")
      ->check(CLI::PositiveNumber);
  train_cmd->add_flag("--no-flip", no_flip, "Disable horizontal-flip augmentation");
  bool skip_straddlers = false;
  train_cmd->add_flag("--skip-straddlers", skip_straddlers,
                      "Detection: skip windows overlapping a region without containing their centre");
  train_cmd->add_option("--curve", curve, "Training-curve CSV (default: <out>.curve.csv)");
  train_cmd->callback([&] {
    tcfg.label_straddlers = !skip_straddlers;
    action = [&] { return cmd_train(g, manifest, model_path, tcfg, no_flip, curve, io); };
  });

  // eval-class
  std::string split = "test", csv;
  auto* eval_class = app.add_subcommand("eval-class", "Classification accuracy and confusion matrix");
  eval_class->add_option("--manifest", manifest, "Classification manifest")->required();
  eval_class->add_option("--model", model_path, "Model file")->required();
  eval_class->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval_class->add_option("--csv", csv, "Write accuracy CSV");
  eval_class->callback([&] { action = [&] { return cmd_eval_class(g, manifest, model_path, split, csv, io); }; });

  // eval-detect
  DetectFlags dflags;
  std::string preds_out;
  auto* eval_detect = app.add_subcommand("eval-detect", "Detection mAP at several IoU thresholds");
  eval_detect->add_option("--manifest", manifest, "Detection manifest")->required();
  eval_detect->add_option("--model", model_path, "Model file")->required();
  eval_detect->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval_detect->add_option("--predictions", preds_out, "Write predictions (JSON lines)");
  eval_detect->add_option("--csv", csv, "Write per-class AP CSV");
  add_detect_flags(eval_detect, dflags);
  eval_detect->callback([&] {
    action = [&] { return cmd_eval_detect(g, manifest, model_path, split, dflags, preds_out, csv, io); };
  });

  // transfer
  std::array<std::string, 2> models, manifests;
  auto* transfer = app.add_subcommand("transfer", "Train-variant x test-variant mAP table");
  transfer->add_option("--basic-model", models[0], "Model trained on basic")->required();
  transfer->add_option("--difficult-model", models[1], "Model trained on difficult")->required();
  transfer->add_option("--basic-manifest", manifests[0], "Basic detection manifest")->required();
  transfer->add_option("--difficult-manifest", manifests[1], "Difficult detection manifest")->required();
  transfer->add_option("--csv", csv, "Write transfer CSV");
  add_detect_flags(transfer, dflags);
  transfer->callback([&] { action = [&] { return cmd_transfer(g, models, manifests, dflags, csv, io); }; });

  // report
  std::string predictions, map_iou = "0.5,0.75,0.9", edges = "0.1,0.2,0.3,0.4,0.5,0.6,0.7";
  double size_iou = 0.9;
  auto* report = app.add_subcommand("report", "mAP table and size-bucketed recall CSV from saved predictions");
  report->add_option("--manifest", manifest, "Detection manifest")->required();
  report->add_option("--predictions", predictions, "Predictions file (JSON lines)")->required();
  report->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  report->add_option("--iou", map_iou, "Comma-separated IoU thresholds for mAP");
  report->add_option("--size-iou", size_iou, "IoU threshold for size-bucketed recall")->check(CLI::Range(0.0, 1.0));
  report->add_option("--edges", edges, "Bucket edges on sqrt(area)/image size");
  report->add_option("--out-dir", outdir, "Directory for map.csv and size_recall.csv")->required();
  report->callback([&] {
    action = [&] { return cmd_report(manifest, predictions, split, map_iou, size_iou, edges, outdir, io); };
  });

  // distort
  std::string in_path, out_path, type;
  int level = 3;
  std::optional<double> param;
  auto* distort = app.add_subcommand("distort", "Apply one distortion to one image");
  distort->add_option("--in", in_path, "Input image")->required();
  distort->add_option("--out", out_path, "Output image (.png or .jpg)")->required();
  distort->add_option("--type", type, "gwn, blur, sp, quantization, jpeg, lowpass, denoise, fnoise")->required();
  auto* level_opt = distort->add_option("--level", level, "Grid level 1, 2 or 3")->check(CLI::Range(1, 3));
  distort->add_option("--param", param, "Explicit parameter")->excludes(level_opt);
  distort->callback([&] { action = [&] { return cmd_distort(g, in_path, out_path, type, level, param, io); }; });

  // verify
  auto* verify = app.add_subcommand("verify", "Check a manifest and print a JSON report");
  verify->add_option("--manifest", manifest, "Manifest file")->required();
  verify->callback([&] { action = [&] { return cmd_verify(manifest, io); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }
  try {
    return action();
  } catch (const UndefinedMetric& e) {
    err << "error: " << e.what << "\n";
    return kExitUndefinedMetric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace ddx::cli
