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

#include "ddx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "ddx/parallel.hpp"
#include "ddx/rng.hpp"
#include "json.hpp"

namespace ddx {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error("unknown split '" + std::string(name) + "'");
}

std::string_view task_name(Task t) {
  return t == Task::kClassification ? "classification" : "detection";
}

std::string_view unit_name(SplitUnit u) { return u == SplitUnit::kReference ? "reference" : "image"; }

SplitUnit parse_unit(std::string_view name) {
  if (name == "reference") return SplitUnit::kReference;
  if (name == "image") return SplitUnit::kImage;
  throw Error("unknown split unit '" + std::string(name) + "'");
}

SplitSpec SplitSpec::classification(std::uint64_t seed) {
  return SplitSpec{{0.6, 0.2, 0.2}, SplitUnit::kReference, seed};
}

SplitSpec SplitSpec::detection(std::uint64_t seed) {
  return SplitSpec{{0.8, 0.0, 0.2}, SplitUnit::kReference, seed};
}

void SplitSpec::validate() const {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw Error("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
}

std::vector<Split> assign_splits(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RngStream rng(spec.seed, hash_string("split"));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
  }
  const auto b1 = static_cast<std::size_t>(std::llround(n * spec.fractions[0]));
  const auto b2 = std::max(
      b1, static_cast<std::size_t>(std::llround(n * (spec.fractions[0] + spec.fractions[1]))));
  std::vector<Split> out(n);
  for (std::size_t rank = 0; rank < n; ++rank) {
    out[order[rank]] = rank < b1 ? Split::kTrain : rank < b2 ? Split::kVal : Split::kTest;
  }
  return out;
}

std::vector<fs::path> list_reference_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("reference directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  std::set<std::string> stems;
  for (const auto& p : out) {
    if (!stems.insert(p.stem().string()).second) {
      throw Error("duplicate reference id '" + p.stem().string() + "' in " + dir.string());
    }
  }
  if (out.empty()) throw Error("no reference images in " + dir.string());
  return out;
}

namespace {

std::string item_file(const std::string& ref_id, int item) {
  char name[32];
  std::snprintf(name, sizeof name, "%04d.png", item);
  return "images/" + ref_id + "/" + name;
}

std::uint64_t item_stream(const std::string& ref_id, int item) {
  return hash_combine(hash_string(ref_id), static_cast<std::uint64_t>(item));
}

void prepare_output(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out / "images", ec);
  if (ec || !fs::is_directory(out)) throw Error("cannot create output directory " + out.string());
}

void warn(const BuildOptions& opts, const std::string& msg) {
  if (opts.warn) {
    opts.warn(msg);
  } else {
    std::cerr << "warning: " << msg << "\n";
  }
}

void apply_record_splits(std::vector<ManifestRecord>& records, std::size_t n_refs,
                         const std::vector<std::size_t>& ref_of_record, const SplitSpec& spec) {
  if (spec.unit == SplitUnit::kReference) {
    const auto splits = assign_splits(n_refs, spec);
    for (std::size_t i = 0; i < records.size(); ++i) records[i].split = splits[ref_of_record[i]];
  } else {
    const auto splits = assign_splits(records.size(), spec);
    for (std::size_t i = 0; i < records.size(); ++i) records[i].split = splits[i];
  }
}

void write_report(const fs::path& out, const std::vector<std::string>& skipped) {
  std::ofstream rep(out / "report.txt");
  if (!rep) throw Error("cannot write " + (out / "report.txt").string());
  rep << "skipped references: " << skipped.size() << "\n";
  for (const auto& s : skipped) rep << s << "\n";
}

}  // namespace

BuildResult build_classification_dataset(const fs::path& refs, const fs::path& out,
                                         const SplitSpec& split, std::uint64_t master_seed,
                                         const BuildOptions& opts) {
  split.validate();
  const auto ref_paths = list_reference_images(refs);
  prepare_output(out);
  constexpr int kPerRef = kNumDistortionClasses * 3;

  BuildResult result;
  result.records.resize(ref_paths.size() * kPerRef);
  std::vector<std::size_t> ref_of_record(result.records.size());
  parallel_for(ref_paths.size(), opts.threads, [&](std::size_t r) {
    const std::string ref_id = ref_paths[r].stem().string();
    const ImageF ref = to_real(load_image(ref_paths[r]));
    fs::create_directories(out / "images" / ref_id);
    for (int c = 0; c < kNumDistortionClasses; ++c) {
      const LevelGrid grid = level_grid(kDistortionClasses[c]);
      for (int level = 0; level < 3; ++level) {
        const int item = c * 3 + level;
        const DistortionSpec spec{kDistortionClasses[c], grid.levels[level]};
        RngStream rng(master_seed, item_stream(ref_id, item));
        ManifestRecord rec;
        rec.file = item_file(ref_id, item);
        rec.ref_id = ref_id;
        rec.task = Task::kClassification;
        rec.width = ref.width();
        rec.height = ref.height();
        rec.spec = spec;
        rec.level_index = level;
        save_image(to_u8(apply(ref, spec, rng)), out / rec.file);
        const std::size_t idx = r * kPerRef + item;
        result.records[idx] = std::move(rec);
        ref_of_record[idx] = r;
      }
    }
  });
  apply_record_splits(result.records, ref_paths.size(), ref_of_record, split);
  result.manifest = out / "manifest.jsonl";
  write_manifest(result.manifest, result.records);
  write_report(out, result.skipped);
  return result;
}

BuildResult build_detection_dataset(const fs::path& refs, const fs::path& out, Variant variant,
                                    int per_ref, const SplitSpec& split,
                                    std::uint64_t master_seed, const BuildOptions& opts) {
  split.validate();
  if (per_ref < 1) throw Error("per-ref count must be at least 1");
  const auto ref_paths = list_reference_images(refs);
  prepare_output(out);
  const RegionConfig cfg = preset(variant);

  std::vector<std::vector<ManifestRecord>> per_ref_records(ref_paths.size());
  std::vector<std::string> skip_reason(ref_paths.size());
  std::vector<int> degradations(ref_paths.size(), 0);
  parallel_for(ref_paths.size(), opts.threads, [&](std::size_t r) {
    const std::string ref_id = ref_paths[r].stem().string();
    const ImageF ref = to_real(load_image(ref_paths[r]));
    if (ref.width() < cfg.image_size || ref.height() < cfg.image_size) {
      skip_reason[r] = ref_id + ": " + std::to_string(ref.width()) + "x" +
                       std::to_string(ref.height()) + " smaller than " +
                       std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size);
      return;
    }
    fs::create_directories(out / "images" / ref_id);
    for (int item = 0; item < per_ref; ++item) {
      RngStream rng(master_seed, item_stream(ref_id, item));
      DetectionSample sample = synthesize_detection_image(ref, cfg, rng);
      degradations[r] += sample.degradations;
      ManifestRecord rec;
      rec.file = item_file(ref_id, item);
      rec.ref_id = ref_id;
      rec.task = Task::kDetection;
      rec.width = cfg.image_size;
      rec.height = cfg.image_size;
      rec.variant = variant;
      rec.regions = std::move(sample.regions);
      save_image(to_u8(sample.image), out / rec.file);
      per_ref_records[r].push_back(std::move(rec));
    }
  });

  BuildResult result;
  std::vector<std::size_t> ref_of_record;
  std::size_t kept = 0;
  for (std::size_t r = 0; r < ref_paths.size(); ++r) {
    if (!skip_reason[r].empty()) {
      warn(opts, "skipping reference " + skip_reason[r]);
      result.skipped.push_back(skip_reason[r]);
      continue;
    }
    for (auto& rec : per_ref_records[r]) {
      result.records.push_back(std::move(rec));
      ref_of_record.push_back(kept);
    }
    result.degradations += degradations[r];
    ++kept;
  }
  if (kept == 0) throw Error("no usable reference images in " + refs.string());
  apply_record_splits(result.records, kept, ref_of_record, split);
  result.manifest = out / "manifest.jsonl";
  write_manifest(result.manifest, result.records);
  write_report(out, result.skipped);
  return result;
}

std::string record_to_json_line(const ManifestRecord& rec) {
  json j;
  j["file"] = rec.file;
  j["ref_id"] = rec.ref_id;
  j["split"] = split_name(rec.split);
  j["task"] = task_name(rec.task);
  j["width"] = rec.width;
  j["height"] = rec.height;
  if (rec.task == Task::kClassification) {
    j["class"] = class_name(rec.spec.cls);
    j["param"] = rec.spec.param;
    j["level"] = rec.level_index;
  } else {
    j["variant"] = variant_name(rec.variant);
    json regions = json::array();
    for (const auto& r : rec.regions) {
      regions.push_back({{"x", r.rect.x},
                         {"y", r.rect.y},
                         {"w", r.rect.w},
                         {"h", r.rect.h},
                         {"class", class_name(r.spec.cls)},
                         {"param", r.spec.param}});
    }
    j["regions"] = std::move(regions);
  }
  return j.dump();
}

namespace {

class LineParser {
 public:
  LineParser(const json& j, std::size_t line) : j_(j), line_(line) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("line " + std::to_string(line_) + ": " + msg);
  }

  const json& field(const json& obj, const char* key) const {
    auto it = obj.find(key);
    if (it == obj.end()) fail(std::string("missing field '") + key + "'");
    return *it;
  }
  std::string str(const json& obj, const char* key) const {
    const json& v = field(obj, key);
    if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  }
  int integer(const json& obj, const char* key) const {
    const json& v = field(obj, key);
    if (!v.is_number_integer()) fail(std::string("field '") + key + "' must be an integer");
    return v.get<int>();
  }
  double number(const json& obj, const char* key) const {
    const json& v = field(obj, key);
    if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
    return v.get<double>();
  }
  DistortionClass cls(const json& obj) const {
    const std::string name = str(obj, "class");
    auto c = parse_class(name);
    if (!c || *c == DistortionClass::kPristine) fail("unknown class '" + name + "'");
    return *c;
  }
  void only_keys(const json& obj, std::initializer_list<const char*> keys) const {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
        fail("unexpected field '" + it.key() + "'");
      }
    }
  }

  const json& root() const { return j_; }

 private:
  const json& j_;
  std::size_t line_;
};

}  // namespace

ManifestRecord parse_record_line(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error("line " + std::to_string(line_no) + ": malformed record (" + e.what() + ")");
  }
  LineParser p(j, line_no);
  if (!j.is_object()) p.fail("record must be an object");
  ManifestRecord rec;
  rec.file = p.str(j, "file");
  rec.ref_id = p.str(j, "ref_id");
  try {
    rec.split = parse_split(p.str(j, "split"));
  } catch (const Error& e) {
    p.fail(e.what());
  }
  const std::string task = p.str(j, "task");
  rec.width = p.integer(j, "width");
  rec.height = p.integer(j, "height");
  if (rec.width <= 0 || rec.height <= 0) p.fail("image dimensions must be positive");
  if (task == "classification") {
    p.only_keys(j, {"file", "ref_id", "split", "task", "width", "height", "class", "param", "level"});
    rec.task = Task::kClassification;
    rec.spec = {p.cls(j), p.number(j, "param")};
    rec.level_index = p.integer(j, "level");
    if (rec.level_index < 0 || rec.level_index > 2) p.fail("level must be 0, 1 or 2");
  } else if (task == "detection") {
    p.only_keys(j, {"file", "ref_id", "split", "task", "width", "height", "variant", "regions"});
    rec.task = Task::kDetection;
    try {
      rec.variant = parse_variant(p.str(j, "variant"));
    } catch (const Error& e) {
      p.fail(e.what());
    }
    const json& regions = p.field(j, "regions");
    if (!regions.is_array()) p.fail("field 'regions' must be an array");
    for (const json& r : regions) {
      if (!r.is_object()) p.fail("region must be an object");
      p.only_keys(r, {"x", "y", "w", "h", "class", "param"});
      RegionAnnotation a;
      a.rect = {p.integer(r, "x"), p.integer(r, "y"), p.integer(r, "w"), p.integer(r, "h")};
      a.spec = {p.cls(r), p.number(r, "param")};
      if (!a.rect.inside(rec.width, rec.height)) p.fail("rect out of bounds");
      rec.regions.push_back(a);
    }
  } else {
    p.fail("unknown task '" + task + "'");
  }
  return rec;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& recs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& r : recs) out << record_to_json_line(r) << '\n';
  if (!out) throw Error("cannot write manifest " + path.string());
}

namespace {

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, line_no);
  }
}

}  // namespace

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::vector<ManifestRecord> out;
  for_each_line(path, [&](const std::string& line, std::size_t no) {
    out.push_back(parse_record_line(line, no));
  });
  return out;
}

bool VerifyReport::ok() const {
  return std::none_of(issues.begin(), issues.end(), [](const VerifyIssue& i) { return i.error; });
}

std::string VerifyReport::to_json() const {
  json j;
  j["records"] = records;
  j["ok"] = ok();
  j["splits"] = json(split_counts);
  json list = json::array();
  for (const auto& i : issues) {
    list.push_back({{"line", i.line}, {"severity", i.error ? "error" : "warning"}, {"message", i.message}});
  }
  j["issues"] = std::move(list);
  return j.dump(2);
}

VerifyReport verify_manifest(const fs::path& path) {
  VerifyReport rep;
  const fs::path base = path.parent_path();
  std::map<std::string, std::set<std::string>> splits_of_ref;
  std::optional<Task> task;
  for_each_line(path, [&](const std::string& line, std::size_t no) {
    ManifestRecord rec;
    try {
      rec = parse_record_line(line, no);
    } catch (const Error& e) {
      std::string msg = e.what();
      const std::string prefix = "line " + std::to_string(no) + ": ";
      if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
      rep.issues.push_back({no, true, msg});
      return;
    }
    ++rep.records;
    if (!task) task = rec.task;
    ++rep.split_counts[std::string(split_name(rec.split))];
    splits_of_ref[rec.ref_id].insert(std::string(split_name(rec.split)));
    if (!fs::exists(base / rec.file)) rep.issues.push_back({no, true, "missing file " + rec.file});
    try {
      if (rec.task == Task::kClassification) {
        validate_spec(rec.spec);
        if (std::abs(level_grid(rec.spec.cls).levels[rec.level_index] - rec.spec.param) > 1e-12) {
          rep.issues.push_back({no, true, "param does not match level grid"});
        }
      } else {
        if (rec.regions.empty()) rep.issues.push_back({no, true, "detection record has no regions"});
        for (std::size_t a = 0; a < rec.regions.size(); ++a) {
          validate_spec(rec.regions[a].spec);
          for (std::size_t b = a + 1; b < rec.regions.size(); ++b) {
            if (intersection_area(rec.regions[a].rect, rec.regions[b].rect) > 0) {
              rep.issues.push_back({no, true, "overlapping regions"});
            }
          }
        }
      }
    } catch (const Error& e) {
      rep.issues.push_back({no, true, e.what()});
    }
  });
  if (rep.records == 0 && rep.issues.empty()) rep.issues.push_back({0, false, "no records"});
  if (task && rep.records > 0) {
    // Default fractions; off by more than one reference's share is flagged.
    const SplitSpec expect =
        *task == Task::kClassification ? SplitSpec::classification() : SplitSpec::detection();
    const double slack = std::max(0.05, 1.0 / static_cast<double>(splits_of_ref.size()));
    for (Split sp : {Split::kTrain, Split::kVal, Split::kTest}) {
      const auto it = rep.split_counts.find(std::string(split_name(sp)));
      const double got = it == rep.split_counts.end() ? 0.0 : double(it->second) / rep.records;
      const double want = expect.fractions[static_cast<int>(sp)];
      if (std::abs(got - want) > slack + 1e-12) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "split fraction %s is %.3f, expected %.3f",
                      std::string(split_name(sp)).c_str(), got, want);
        rep.issues.push_back({0, false, buf});
      }
    }
  }
  for (const auto& [ref, splits] : splits_of_ref) {
    if (splits.size() > 1) {
      rep.issues.push_back({0, false, "ref_id '" + ref + "' appears in more than one split"});
    }
  }
  return rep;
}

std::string file_hash_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace ddx
