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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "ddx/dataset.hpp"
#include "ddx/detector.hpp"
#include "ddx/distortions.hpp"
#include "ddx/evalmap.hpp"
#include "ddx/parallel.hpp"
#include "ddx/regiongen.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ddx;
using namespace ddx::testing;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 2026;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a sub-check; the first failing one is called out.
  void expect(bool ok, const std::string& what) {
    if (!ok) detail << "FAILED " << what << "; ";
    pass = pass && ok;
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("undefined"); }

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "ddx");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (code != cli::kExitOk) std::fprintf(stderr, "ddx %s exited %d: %s\n", args[1].c_str(), code, e.str().c_str());
  return code;
}

std::map<std::string, std::string> tree_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = file_hash_hex(e.path());
  }
  return out;
}

BuildOptions build_options() {
  BuildOptions o;
  o.threads = resolve_threads(0);
  o.warn = [](const std::string& m) { std::fprintf(stderr, "warning: %s\n", m.c_str()); };
  return o;
}

// --- 1 -------------------------------------------------------------------

void operator_statistics(Outcome& o) {
  const auto t0 = Clock::now();
  const ImageF mid = constant_image(300, 300, 3, 0.5);
  for (double v : level_grid(DistortionClass::kGwn).levels) {
    RngStream rng(kSeed, 1);
    const double got = variance_of_difference(apply_gwn(mid, v, rng), mid);
    o.detail << "gwn " << v << "->" << fmt(got) << " ";
    o.expect(std::abs(got - v) <= 0.05 * v, "gwn variance");
  }
  const ImageF scene = natural_fixture(300, 300, kSeed);
  for (double a : level_grid(DistortionClass::kSaltPepper).levels) {
    RngStream rng(kSeed, 2);
    const ImageF out = apply_salt_pepper(scene, a, rng);
    std::size_t changed = 0;
    for (int y = 0; y < 300; ++y)
      for (int x = 0; x < 300; ++x) {
        bool any = false;
        for (int c = 0; c < 3; ++c) any = any || out.at(x, y, c) != scene.at(x, y, c);
        changed += any;
      }
    const double frac = static_cast<double>(changed) / (300.0 * 300.0);
    o.detail << "s&p " << a << "->" << fmt(frac) << " ";
    o.expect(std::abs(frac - a) <= 0.005, "s&p fraction");
  }
  RngStream rng(kSeed, 3);
  const double slope = radial_slope(dft_power(pink_noise_field(300, 300, rng), 300), 300);
  o.detail << "pink slope " << fmt(slope) << " ";
  o.expect(std::abs(slope + 2.0) <= 0.3, "pink slope");
  const double elapsed = seconds_since(t0);
  o.detail << "time " << fmt(elapsed, 3) << "s";
  o.expect(elapsed < 10.0, "runtime");
}

// --- 2 -------------------------------------------------------------------

void oracle_equivalences(Outcome& o) {
  double worst_nlm = 0;
  for (std::uint64_t s = 0; s < 2; ++s) {
    const ImageF img = natural_fixture(24, 24, s + 1);
    const ImageF fast = apply_nlm_denoise(img, 0.06);
    const ImageF slow = nlm_reference(img, 0.06, 7, 11);
    for (std::size_t i = 0; i < img.size(); ++i) {
      worst_nlm = std::max(worst_nlm, std::abs(fast.data()[i] - std::clamp(slow.data()[i], 0.0, 1.0)));
    }
  }
  o.detail << "nlm " << fmt(worst_nlm, 2) << " ";
  o.expect(worst_nlm <= 1e-6, "nlm");

  double worst_map = 0;
  RngStream rng(kSeed, 4);
  auto rect = [&](int size) {
    const int w = static_cast<int>(rng.uniform_int(4, size / 2)), h = static_cast<int>(rng.uniform_int(4, size / 2));
    return Rect{static_cast<int>(rng.uniform_int(0, size - w)), static_cast<int>(rng.uniform_int(0, size - h)), w, h};
  };
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ImageEval> images(static_cast<std::size_t>(rng.uniform_int(1, 20)));
    for (auto& im : images) {
      im.image_size = 64;
      const int n_gt = static_cast<int>(rng.uniform_int(0, 5)), n_pred = static_cast<int>(rng.uniform_int(0, 5));
      for (int g = 0; g < n_gt; ++g)
        im.gts.push_back({rect(64), {class_from_code(static_cast<int>(rng.uniform_int(0, 2))), 1.0}});
      for (int p = 0; p < n_pred; ++p)
        im.preds.push_back({rect(64), class_from_code(static_cast<int>(rng.uniform_int(0, 2))),
                            std::round(rng.uniform() * 10) / 10});
    }
    for (double thr : {0.1, 0.5, 0.9}) {
      const auto fast = mean_ap(images, std::vector<double>{thr})[0].map;
      const auto slow = brute_force_map(images, thr);
      if (fast.has_value() != slow.has_value()) {
        worst_map = 1.0;
      } else if (fast) {
        worst_map = std::max(worst_map, std::abs(*fast - *slow));
      }
    }
  }
  o.detail << "evaluator " << fmt(worst_map, 2) << " ";
  o.expect(worst_map <= 1e-9, "evaluator");

  double worst_fwd = 0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto m = random_model(s + 100);
    const auto x = random_patch(s + 200);
    const ClassProbs a = forward(m, x), b = scalar_forward(m.params, x);
    for (int k = 0; k < kNumClasses; ++k) worst_fwd = std::max(worst_fwd, std::abs(a[k] - b[k]));
  }
  o.detail << "forward " << fmt(worst_fwd, 2) << " ";
  o.expect(worst_fwd <= 1e-6, "forward");

  double worst_resize = 0;
  const ImageF src = random_image(13, 9, 1, kSeed);
  std::vector<std::vector<double>> rows(9, std::vector<double>(13));
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 13; ++x) rows[y][x] = src.at(x, y, 0);
  for (auto [w, h] : {std::pair{29, 17}, std::pair{5, 4}, std::pair{13, 9}, std::pair{40, 3}}) {
    const ImageF out = resize_bilinear(src, w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        worst_resize = std::max(worst_resize, std::abs(out.at(x, y, 0) - bilinear_oracle(rows, w, h, x, y)));
  }
  o.detail << "resize " << fmt(worst_resize, 2);
  o.expect(worst_resize <= 1e-6, "resize");
}

// --- 3 -------------------------------------------------------------------

void gradient_check_all(Outcome& o) {
  for (const TensorCheck& t : gradient_check(kSeed)) {
    o.detail << t.name << " " << fmt(t.worst, 2) << " (" << t.checked << "/" << t.wanted << ") ";
    o.expect(t.worst < 1e-4, t.name + " relative error");
    // Entries at ReLU or pooling kinks have no derivative; at least half of
    // every tensor's requested entries must be checkable.
    o.expect(t.checked * 2 >= t.wanted, t.name + " coverage");
  }
}

// --- 4 -------------------------------------------------------------------

void dataset_counts(Outcome& o, const fs::path& root) {
  const fs::path refs = root / "refs5";
  write_reference_set(refs, 5, 300, 300, kSeed + 4);
  const auto t0 = Clock::now();
  std::string out;
  o.expect(cli({"--seed", "4", "gen-class", "--refs", refs.string(), "--out", (root / "count_class").string()}, &out) ==
               cli::kExitOk,
           "gen-class");
  const auto cls = read_manifest(root / "count_class" / "manifest.jsonl");
  o.expect(cli({"--seed", "4", "gen-detect", "--refs", refs.string(), "--out", (root / "count_det").string()}, &out) ==
               cli::kExitOk,
           "gen-detect");
  const auto det = read_manifest(root / "count_det" / "manifest.jsonl");
  const double elapsed = seconds_since(t0);
  o.detail << "classification " << cls.size() << " detection " << det.size() << " time " << fmt(elapsed, 3) << "s";
  o.expect(cls.size() == 24 * 5, "classification count");
  o.expect(det.size() == 20 * 5, "detection count");
  o.expect(elapsed < 60.0, "runtime");
}

// --- 5 -------------------------------------------------------------------

// KS statistic of integer draws against round(U(lo, hi)).
double ks_rounded_uniform(const std::vector<double>& xs, double lo, double hi) {
  std::map<int, int> counts;
  for (double x : xs) ++counts[static_cast<int>(x)];
  double d = 0, seen = 0;
  const double n = static_cast<double>(xs.size());
  for (int k = static_cast<int>(lo); k <= static_cast<int>(hi); ++k) {
    const double before = seen / n;
    seen += counts[k];
    const double cdf = std::clamp((k + 0.5 - lo) / (hi - lo), 0.0, 1.0);
    const double cdf_before = std::clamp((k - 0.5 - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, std::abs(seen / n - cdf), std::abs(before - cdf_before)});
  }
  return d;
}

void sampling_law(Outcome& o) {
  for (Variant v : {Variant::kBasic, Variant::kDifficult}) {
    const RegionConfig cfg = preset(v);
    RngStream rng(kSeed, 5 + static_cast<int>(v));
    std::vector<int> counts(static_cast<std::size_t>(cfg.count_max - cfg.count_min + 1), 0);
    int overlaps = 0, degradations = 0;
    for (int i = 0; i < 10000; ++i) {
      const RegionSample s = sample_regions(cfg, rng);
      ++counts[static_cast<std::size_t>(s.requested - cfg.count_min)];
      degradations += s.degradations;
      for (std::size_t a = 0; a < s.rects.size(); ++a)
        for (std::size_t b = a + 1; b < s.rects.size(); ++b) overlaps += intersection_area(s.rects[a], s.rects[b]) > 0;
    }
    const double p = chi_square_uniform_p(counts);
    o.detail << variant_name(v) << " p=" << fmt(p, 3) << " overlaps=" << overlaps << " ";
    o.expect(p > 0.01, std::string(variant_name(v)) + " count law");
    o.expect(overlaps == 0, std::string(variant_name(v)) + " overlaps");
  }
  double worst = 0;
  for (DistortionClass cls : kDistortionClasses) {
    const LevelGrid grid = level_grid(cls);
    RngStream rng(kSeed, 20 + class_code(cls));
    std::vector<double> xs;
    for (int i = 0; i < 10000; ++i) xs.push_back(sample_level(cls, rng).param);
    const double ks = grid.integer_valued ? ks_rounded_uniform(xs, grid.min, grid.max) : ks_uniform(xs, grid.min, grid.max);
    worst = std::max(worst, ks);
    o.expect(ks < 0.02, std::string(class_name(cls)) + " level law");
  }
  o.detail << "worst KS " << fmt(worst, 3);
}

// --- 6 -------------------------------------------------------------------

void determinism(Outcome& o, const fs::path& root) {
  const fs::path refs = root / "refs_det";
  write_reference_set(refs, 2, 300, 300, kSeed + 6);
  std::map<std::string, std::string> hashes[2];
  const int thread_counts[2] = {1, 4};
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / ("pipeline_t" + std::to_string(thread_counts[run]));
    fs::remove_all(dir);
    const std::vector<std::string> g = {"--seed", "6", "--threads", std::to_string(thread_counts[run])};
    auto with = [&](std::vector<std::string> rest) {
      std::vector<std::string> args = g;
      args.insert(args.end(), rest.begin(), rest.end());
      return cli(args);
    };
    const std::string c = (dir / "class").string(), d = (dir / "detect").string();
    bool ok = with({"gen-class", "--refs", refs.string(), "--out", c, "--unit", "image"}) == 0;
    ok = ok && with({"gen-detect", "--refs", refs.string(), "--out", d, "--per-ref", "2", "--unit", "image"}) == 0;
    ok = ok && with({"train", "--manifest", c + "/manifest.jsonl", "--out", c + "/model.ddm", "--epochs", "1",
                     "--patches-per-image", "4"}) == 0;
    ok = ok && with({"train", "--manifest", d + "/manifest.jsonl", "--out", d + "/model.ddm", "--epochs", "1",
                     "--patches-per-image", "4"}) == 0;
    ok = ok && with({"eval-class", "--manifest", c + "/manifest.jsonl", "--model", c + "/model.ddm", "--csv",
                     c + "/accuracy.csv"}) == 0;
    ok = ok && with({"eval-detect", "--manifest", d + "/manifest.jsonl", "--model", d + "/model.ddm",
                     "--predictions", d + "/predictions.jsonl", "--csv", d + "/map.csv"}) == 0;
    o.expect(ok, "pipeline run with " + std::to_string(thread_counts[run]) + " threads");
    hashes[run] = tree_hashes(dir);
  }
  std::size_t differing = 0;
  for (const auto& [file, h] : hashes[0]) differing += hashes[1].count(file) == 0 || hashes[1].at(file) != h;
  o.detail << hashes[0].size() << " files, " << differing << " differ between 1 and 4 threads";
  o.expect(hashes[0].size() == hashes[1].size() && differing == 0, "hash equality");
  for (const char* f : {"class/manifest.jsonl", "class/model.ddm", "class/accuracy.csv", "detect/manifest.jsonl",
                        "detect/model.ddm", "detect/predictions.jsonl", "detect/map.csv"}) {
    o.expect(hashes[0].count(f) == 1, std::string("output ") + f);
  }
}

// --- 7 and 8 -------------------------------------------------------------

struct Trained {
  PatchClassifierModel model;
  double seconds = 0;
};

Trained timed_train(const fs::path& manifest, const char* what) {
  TrainConfig cfg;
  cfg.seed = kSeed;
  cfg.threads = resolve_threads(0);
  const auto t0 = Clock::now();
  Trained t{train(manifest, cfg).model, 0};
  t.seconds = seconds_since(t0);
  save_model(t.model, manifest.parent_path() / "model.ddm");
  std::fprintf(stderr, "trained %s model in %.1fs\n", what, t.seconds);
  return t;
}

std::vector<ImageEval> detect_split(const PatchClassifierModel& model, const fs::path& manifest) {
  std::vector<ManifestRecord> recs;
  for (auto& r : read_manifest(manifest))
    if (r.split == Split::kTest) recs.push_back(std::move(r));
  std::vector<ImagePredictions> preds(recs.size());
  parallel_for(recs.size(), resolve_threads(0), [&](std::size_t i) {
    preds[i].image = recs[i].file;
    preds[i].boxes = detect(model, to_real(load_image(manifest.parent_path() / recs[i].file)));
  });
  return join_predictions(recs, Split::kTest, preds);
}

std::string map_triplet(const std::vector<ApResult>& r) {
  std::string s;
  for (const auto& a : r) s += "@" + fmt(a.threshold, 2) + "=" + fmt_opt(a.map) + " ";
  return s;
}

bool monotone(const std::vector<ApResult>& r) {
  for (const auto& a : r)
    if (!a.map) return false;
  return *r[2].map <= *r[1].map && *r[1].map <= *r[0].map;
}

struct EndToEnd {
  Outcome seven;
  Outcome eight;
};

void end_to_end(EndToEnd& e, const fs::path& root) {
  Outcome& o = e.seven;
  const fs::path refs = root / "refs8";
  write_reference_set(refs, 8, 300, 300, kSeed + 7);
  const BuildOptions opts = build_options();

  // (a) classification on strongest-level test images.
  const BuildResult cls = build_classification_dataset(refs, root / "e2e_class", SplitSpec::classification(kSeed),
                                                       kSeed, opts);
  const Trained cls_model = timed_train(cls.manifest, "classification");
  const DistortionClass focus[] = {DistortionClass::kGwn, DistortionClass::kGaussianBlur,
                                   DistortionClass::kSaltPepper, DistortionClass::kLowPass};
  int total = 0, correct = 0;
  for (const auto& r : cls.records) {
    if (r.split != Split::kTest || r.level_index != 2) continue;
    if (std::find(std::begin(focus), std::end(focus), r.spec.cls) == std::end(focus)) continue;
    const auto c = classify_image(cls_model.model, to_real(load_image(cls.manifest.parent_path() / r.file)));
    ++total;
    correct += c.cls == r.spec.cls;
  }
  const double acc = total ? static_cast<double>(correct) / total : 0.0;
  o.detail << "(a) accuracy " << correct << "/" << total << "=" << fmt(acc, 3) << " train "
           << fmt(cls_model.seconds, 3) << "s; ";
  o.expect(total > 0 && acc >= 0.75, "(a) accuracy");
  o.expect(cls_model.seconds <= 300.0, "(a) training time");

  // (b) single strongest-level S&P region on unseen references.
  const BuildResult basic = build_detection_dataset(refs, root / "e2e_basic", Variant::kBasic, 20,
                                                    SplitSpec::detection(kSeed), kSeed, opts);
  const Trained basic_model = timed_train(basic.manifest, "basic detection");
  o.expect(basic_model.seconds <= 300.0, "(b) training time");
  std::vector<std::string> test_refs;
  for (const auto& r : basic.records)
    if (r.split == Split::kTest && std::find(test_refs.begin(), test_refs.end(), r.ref_id) == test_refs.end())
      test_refs.push_back(r.ref_id);
  std::vector<ImageEval> sp_fixtures;
  RngStream place(kSeed, 70);
  const std::pair<int, int> sizes[] = {{150, 150}, {170, 160}, {190, 200}, {220, 180}};
  for (const auto& id : test_refs) {
    const ImageF ref = center_crop(to_real(load_image(refs / (id + ".png"))), 300, 300);
    for (auto [w, h] : sizes) {
      const Rect r{static_cast<int>(place.uniform_int(0, 300 - w)), static_cast<int>(place.uniform_int(0, 300 - h)), w,
                   h};
      const DistortionSpec spec{DistortionClass::kSaltPepper, level_grid(DistortionClass::kSaltPepper).levels[2]};
      RngStream noise(kSeed, 71 + sp_fixtures.size());
      const ImageF img = to_real(to_u8(apply_region(ref, r, spec, noise)));
      sp_fixtures.push_back({id + "_sp" + std::to_string(sp_fixtures.size()), 300, {{r, spec}}, detect(basic_model.model, img)});
    }
  }
  const auto sp_map = mean_ap(sp_fixtures);
  o.detail << "(b) " << sp_fixtures.size() << " fixtures " << map_triplet(sp_map) << "; ";
  o.expect(sp_map[0].map && *sp_map[0].map >= 0.5, "(b) s&p mAP@0.5");

  // (c) and 8.
  const auto basic_on_basic = mean_ap(detect_split(basic_model.model, basic.manifest));
  const BuildResult difficult = build_detection_dataset(refs, root / "e2e_difficult", Variant::kDifficult, 20,
                                                        SplitSpec::detection(kSeed), kSeed, opts);
  const Trained difficult_model = timed_train(difficult.manifest, "difficult detection");
  const auto basic_on_difficult = mean_ap(detect_split(basic_model.model, difficult.manifest));
  const auto difficult_on_difficult = mean_ap(detect_split(difficult_model.model, difficult.manifest));
  o.detail << "(c) basic/basic " << map_triplet(basic_on_basic) << "basic/difficult " << map_triplet(basic_on_difficult)
           << "difficult/difficult " << map_triplet(difficult_on_difficult);
  o.expect(monotone(sp_map) && monotone(basic_on_basic) && monotone(basic_on_difficult) &&
               monotone(difficult_on_difficult),
           "(c) monotone mAP");

  Outcome& t = e.eight;
  const auto& b = basic_on_difficult[2].map;
  const auto& d = difficult_on_difficult[2].map;
  t.detail << "mAP@0.9 on difficult test: basic-trained " << fmt_opt(b) << ", difficult-trained " << fmt_opt(d)
           << " (train " << fmt(difficult_model.seconds, 3) << "s)";
  t.expect(b && d && *b < *d, "basic-trained below difficult-trained");
}

// --- 9 -------------------------------------------------------------------

void size_recall(Outcome& o, const fs::path& root) {
  // GT regions across all six size buckets; predictions are exact, shifted
  // below IoU 0.9, of the wrong class, or missing.
  auto region = [](int x, int y, int w, int h, DistortionClass c) { return RegionAnnotation{{x, y, w, h}, {c, 1.0}}; };
  using C = DistortionClass;
  std::vector<ManifestRecord> recs(3);
  std::vector<ImagePredictions> preds(3);
  const std::vector<std::vector<RegionAnnotation>> gts = {
      {region(10, 10, 40, 40, C::kGwn), region(60, 10, 100, 100, C::kGaussianBlur),
       region(10, 150, 140, 140, C::kSaltPepper)},
      {region(0, 0, 200, 200, C::kJpeg), region(210, 210, 75, 75, C::kLowPass), region(210, 10, 80, 80, C::kDenoise)},
      {region(0, 0, 150, 150, C::kFNoise), region(160, 160, 120, 120, C::kQuantization),
       region(0, 160, 30, 30, C::kGwn)}};
  for (int i = 0; i < 3; ++i) {
    recs[i].file = "images/mixed_" + std::to_string(i) + ".png";
    recs[i].ref_id = "mixed";
    recs[i].split = Split::kTest;
    recs[i].task = Task::kDetection;
    recs[i].width = recs[i].height = 300;
    recs[i].regions = gts[i];
    preds[i].image = recs[i].file;
  }
  preds[0].boxes = {{{10, 10, 40, 40}, C::kGwn, 0.9}, {{80, 10, 100, 100}, C::kGaussianBlur, 0.8},
                    {{10, 150, 140, 140}, C::kSaltPepper, 0.7}};
  preds[1].boxes = {{{0, 0, 190, 200}, C::kJpeg, 0.9}, {{210, 10, 80, 80}, C::kDenoise, 0.6}};
  preds[2].boxes = {{{0, 0, 150, 150}, C::kFNoise, 0.9}, {{160, 160, 120, 120}, C::kGwn, 0.5}};
  const fs::path dir = root / "mixed";
  fs::create_directories(dir);
  write_manifest(dir / "manifest.jsonl", recs);
  write_predictions(dir / "predictions.jsonl", preds);
  o.expect(cli({"report", "--manifest", (dir / "manifest.jsonl").string(), "--predictions",
                (dir / "predictions.jsonl").string(), "--out-dir", (dir / "report").string()}) == cli::kExitOk,
           "report command");
  std::ifstream in(dir / "report" / "size_recall.csv");
  std::stringstream got;
  got << in.rdbuf();
  // Hand tally: ratio sqrt(w*h)/300 per region, matched at IoU 0.9.
  //   [0.1,0.2): 40 (hit), 30 (missed)     [0.2,0.3): 75 (missed), 80 (hit)
  //   [0.3,0.4): 100 (IoU 0.67)            [0.4,0.5): 140 (hit), 120 (wrong class)
  //   [0.5,0.6): 150 (hit)                 [0.6,0.7]: 200 (IoU 0.95)
  const std::string expected =
      "bucket_lo,bucket_hi,gt_count,matched,recall\n"
      "0.1,0.2,2,1,0.5\n"
      "0.2,0.3,2,1,0.5\n"
      "0.3,0.4,1,0,0\n"
      "0.4,0.5,2,1,0.5\n"
      "0.5,0.6,1,1,1\n"
      "0.6,0.7,1,1,1\n";
  o.expect(got.str() == expected, "CSV matches hand tally");
  // Bins are contiguous and increasing.
  std::vector<std::pair<double, double>> bins;
  std::string line;
  std::getline(got.seekg(0), line);
  while (std::getline(got, line)) {
    double lo = 0, hi = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf", &lo, &hi) == 2) bins.emplace_back(lo, hi);
  }
  bool ordered = !bins.empty();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    ordered = ordered && bins[i].first < bins[i].second && (i == 0 || bins[i - 1].second == bins[i].first);
  }
  o.expect(ordered, "monotone bins");
  o.detail << bins.size() << " bins, CSV " << (got.str() == expected ? "matches" : "differs from") << " hand tally";
}

}  // namespace

int main(int argc, char** argv) {
  // Thread counts are chosen per criterion.
  unsetenv("DDX_THREADS");
  const fs::path root = scratch_dir("acceptance");
  // Optional arguments select criteria by number.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  struct Criterion {
    int id;
    const char* name;
    std::function<void(Outcome&)> run;
  };
  EndToEnd e2e;
  bool e2e_done = false;
  auto run_e2e = [&] {
    if (!e2e_done) end_to_end(e2e, root);
    e2e_done = true;
  };
  const std::vector<Criterion> criteria = {
      {1, "operator statistics", operator_statistics},
      {2, "oracle equivalences", oracle_equivalences},
      {3, "gradient check", gradient_check_all},
      {4, "dataset counts", [&](Outcome& o) { dataset_counts(o, root); }},
      {5, "sampling law", sampling_law},
      {6, "determinism", [&](Outcome& o) { determinism(o, root); }},
      {7, "desk-scale end-to-end", [&](Outcome& o) {
         run_e2e();
         o.pass = e2e.seven.pass;
         o.detail << e2e.seven.detail.str();
       }},
      {8, "transfer trend", [&](Outcome& o) {
         run_e2e();
         o.pass = e2e.eight.pass;
         o.detail << e2e.eight.detail.str();
       }},
      {9, "size-recall curve", [&](Outcome& o) { size_recall(o, root); }},
  };

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    ++ran;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.run(o);
    } catch (const std::exception& ex) {
      o.expect(false, std::string("exception: ") + ex.what());
    }
    std::printf("criterion %d %s: %s [%.1fs] %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", seconds_since(t0),
                o.detail.str().c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
