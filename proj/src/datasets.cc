// Copyright 2026 The Disentangle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "disentangle/datasets.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include "disentangle/errors.h"
#include "disentangle/image_io.h"

namespace disentangle {
namespace {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform double in [0, 1) from 53 high bits; independent of the standard
// library's distribution implementations so the generator is byte-stable.
double unit(uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

struct Ellipse {
  double cx, cy, ax, ay, angle, intensity;
};

struct IdentityTemplate {
  Ellipse body;
  std::vector<Ellipse> blobs;
  double tint[3];
};

IdentityTemplate make_template(uint64_t seed, int identity) {
  uint64_t state = seed * 0x2545f4914f6cdd1dULL + static_cast<uint64_t>(identity) + 1;
  auto u = [&state] { return unit(splitmix64(state)); };
  IdentityTemplate t;
  t.body = {0.0, 0.0, 0.62 + 0.2 * u(), 0.62 + 0.2 * u(), std::numbers::pi * u(),
            0.3 + 0.12 * u()};
  for (int b = 0; b < 3; ++b) {
    const double r = 0.45 * std::sqrt(u());
    const double phi = 2.0 * std::numbers::pi * u();
    const double sign = u() < 0.5 ? -1.0 : 1.0;
    t.blobs.push_back({r * std::cos(phi), r * std::sin(phi), 0.12 + 0.12 * u(),
                       0.1 + 0.1 * u(), std::numbers::pi * u(),
                       sign * (0.18 + 0.17 * u())});
  }
  for (double& c : t.tint) c = 0.75 + 0.25 * u();
  return t;
}

// Smooth indicator of the ellipse interior with a ~0.03-unit edge.
double soft_inside(const Ellipse& e, double x, double y) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double lx = c * (x - e.cx) + s * (y - e.cy);
  const double ly = -s * (x - e.cx) + c * (y - e.cy);
  const double r = std::sqrt((lx / e.ax) * (lx / e.ax) + (ly / e.ay) * (ly / e.ay));
  const double edge = (1.0 - r) * std::min(e.ax, e.ay) / 0.03;
  return 1.0 / (1.0 + std::exp(-edge));
}

// Marker site of class k >= 1, in template coordinates.
std::pair<double, double> lesion_site(int label, int num_classes) {
  const double phi = -std::numbers::pi / 4.0 +
                     2.0 * std::numbers::pi * (label - 1) /
                         std::max(1, num_classes - 1);
  return {0.3 * std::cos(phi), 0.3 * std::sin(phi)};
}

torch::Tensor render(const FactorSpec& spec, const IdentityTemplate& t, int label,
                     const SampleFactors& f) {
  const int n = spec.image_size;
  auto img = torch::empty({spec.channels, n, n}, torch::kFloat32);
  auto acc = img.accessor<float, 3>();
  const double theta = f.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double tx = 2.0 * f.dx / n, ty = 2.0 * f.dy / n;
  const Ellipse lesion{f.lesion_x, f.lesion_y, 0.14, 0.11, 0.5, 0.45};
  for (int py = 0; py < n; ++py) {
    for (int px = 0; px < n; ++px) {
      const double x = (px + 0.5) / n * 2.0 - 1.0 - tx;
      const double y = (py + 0.5) / n * 2.0 - 1.0 - ty;
      // Inverse rotation maps the pixel into template coordinates.
      const double u = c * x + s * y;
      const double v = -s * x + c * y;
      double value = 0.05 + t.body.intensity * soft_inside(t.body, u, v);
      for (const auto& blob : t.blobs) value += blob.intensity * soft_inside(blob, u, v);
      if (label > 0) value += lesion.intensity * soft_inside(lesion, u, v);
      value *= f.brightness;
      for (int ch = 0; ch < spec.channels; ++ch) {
        const double tinted = spec.channels == 1 ? value : value * t.tint[ch];
        const double q = std::round(std::clamp(tinted, 0.0, 1.0) * 255.0);
        acc[ch][py][px] = static_cast<float>(q) / 255.0f;
      }
    }
  }
  return img;
}

std::string split_name(int which) {
  static const char* kNames[] = {"train", "validation", "test"};
  return kNames[which];
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  out.push_back(field);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  size_t pos = 0;
  try {
    out = std::stoll(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

int split_index(const std::string& name) {
  if (name == "train") return 0;
  if (name == "validation" || name == "val") return 1;
  if (name == "test") return 2;
  return -1;
}

std::vector<LabeledSample>& split_list(DatasetSplit& d, int which) {
  return which == 0 ? d.train : which == 1 ? d.validation : d.test;
}

}  // namespace

std::string to_string(IdentityMode mode) {
  return mode == IdentityMode::kSiamese ? "siamese" : "multiclass";
}

IdentityMode identity_mode_from_string(const std::string& name) {
  if (name == "siamese") return IdentityMode::kSiamese;
  if (name == "multiclass") return IdentityMode::kMulticlass;
  throw ConfigError("unknown identity mode '" + name +
                    "' (expected multiclass or siamese)");
}

void FactorSpec::validate() const {
  if (num_identities < 3) {
    throw ConfigError("num_identities must be >= 3, got " +
                      std::to_string(num_identities));
  }
  if (num_classes < 2) {
    throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
  }
  if (image_size < 16) {
    throw ConfigError("image_size must be >= 16, got " + std::to_string(image_size));
  }
  if (channels != 1 && channels != 3) {
    throw ConfigError("channels must be 1 or 3, got " + std::to_string(channels));
  }
  if (train_samples < 1 || validation_samples < 0 || test_samples < 0) {
    throw ConfigError("sample counts must be nonnegative and train_samples >= 1");
  }
  if (nuisance.translation_px < 0 || nuisance.rotation_deg < 0 ||
      nuisance.brightness_jitter < 0 || nuisance.brightness_jitter >= 1) {
    throw ConfigError("nuisance ranges must be nonnegative, brightness jitter < 1");
  }
}

double class_fraction(const std::vector<LabeledSample>& samples, int label) {
  if (samples.empty()) return 0.0;
  const auto n = std::count_if(samples.begin(), samples.end(),
                               [label](const LabeledSample& s) { return s.label == label; });
  return static_cast<double>(n) / static_cast<double>(samples.size());
}

DatasetSplit generate_synthetic(const FactorSpec& spec) {
  spec.validate();
  std::vector<IdentityTemplate> templates;
  for (int i = 0; i < spec.num_identities; ++i) templates.push_back(make_template(spec.seed, i));

  DatasetSplit out;
  out.num_identities = spec.num_identities;
  out.num_classes = spec.num_classes;
  out.image_size = spec.image_size;
  out.channels = spec.channels;

  uint64_t state = spec.seed ^ 0x51ed270b27f1c3a5ULL;
  auto u = [&state] { return unit(splitmix64(state)); };
  auto symmetric = [&u](double range) { return range * (2.0 * u() - 1.0); };

  const int counts[3] = {spec.train_samples, spec.validation_samples, spec.test_samples};
  for (int which = 0; which < 3; ++which) {
    auto& list = split_list(out, which);
    for (int s = 0; s < counts[which]; ++s) {
      const int identity = s % spec.num_identities;
      const int label = (s / spec.num_identities) % spec.num_classes;
      SampleFactors f;
      f.dx = symmetric(spec.nuisance.translation_px);
      f.dy = symmetric(spec.nuisance.translation_px);
      f.rotation_deg = symmetric(spec.nuisance.rotation_deg);
      f.brightness = 1.0 + symmetric(spec.nuisance.brightness_jitter);
      const auto [lx, ly] = lesion_site(std::max(label, 1), spec.num_classes);
      const double jx = symmetric(0.05), jy = symmetric(0.05);
      if (label > 0) {
        f.lesion_x = lx + jx;
        f.lesion_y = ly + jy;
      }
      LabeledSample sample;
      sample.image = render(spec, templates[identity], label, f);
      sample.identity = identity;
      sample.label = label;
      sample.patient_key = std::to_string(identity);
      char name[32];
      std::snprintf(name, sizeof(name), "%s_%05d", split_name(which).c_str(), s);
      sample.name = name;
      sample.factors = f;
      list.push_back(std::move(sample));
    }
  }
  return out;
}

void write_dataset(const DatasetSplit& split, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "images");
  std::ofstream manifest(root / "manifest.csv", std::ios::binary);
  if (!manifest) throw Error("io", "cannot write " + (root / "manifest.csv").string());
  manifest << "path,identity,class,split\n";
  nlohmann::json factors = nlohmann::json::array();
  for (int which = 0; which < 3; ++which) {
    const auto& list = which == 0 ? split.train : which == 1 ? split.validation : split.test;
    for (const auto& s : list) {
      const std::string rel = "images/" + s.name + ".png";
      write_png(root / rel, s.image);
      manifest << rel << ',' << s.patient_key << ',' << s.label << ','
               << split_name(which) << '\n';
      nlohmann::json rec = {{"path", rel},
                            {"split", split_name(which)},
                            {"identity", s.identity},
                            {"class", s.label}};
      if (s.factors) {
        rec["dx"] = s.factors->dx;
        rec["dy"] = s.factors->dy;
        rec["rotation_deg"] = s.factors->rotation_deg;
        rec["brightness"] = s.factors->brightness;
        rec["lesion_x"] = s.factors->lesion_x;
        rec["lesion_y"] = s.factors->lesion_y;
      }
      factors.push_back(std::move(rec));
    }
  }
  std::ofstream(root / "factors.json", std::ios::binary) << factors.dump(1) << '\n';
}

DatasetSplit load_directory_dataset(const std::filesystem::path& root,
                                    const std::filesystem::path& manifest_path,
                                    const LoadOptions& options) {
  std::ifstream in(manifest_path);
  if (!in) throw IngestionError("cannot open manifest: " + manifest_path.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("empty manifest: " + manifest_path.string());
  const auto header = split_csv_line(line);
  auto column = [&header](const std::string& name) -> int {
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int path_col = column("path"), id_col = column("identity"),
            class_col = column("class"), split_col = column("split");
  if (path_col < 0 || id_col < 0 || class_col < 0) {
    throw IngestionError("manifest header must contain path,identity,class: " +
                         manifest_path.string());
  }

  struct Row {
    std::filesystem::path path;
    std::string identity;
    int label;
    int split;
  };
  std::vector<Row> rows;
  std::vector<std::string> missing;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const size_t need = static_cast<size_t>(std::max({path_col, id_col, class_col, split_col})) + 1;
    if (f.size() < need) {
      throw IngestionError("manifest line " + std::to_string(line_no) + " has too few columns");
    }
    long long label = 0;
    if (!parse_int(f[class_col], label) || label < 0) {
      throw IngestionError("manifest line " + std::to_string(line_no) +
                           ": class must be a nonnegative integer, got '" + f[class_col] + "'");
    }
    int split = -1;
    if (split_col >= 0) {
      split = split_index(f[split_col]);
      if (split < 0) {
        throw IngestionError("manifest line " + std::to_string(line_no) +
                             ": unknown split '" + f[split_col] + "'");
      }
    }
    std::filesystem::path p = f[path_col];
    if (p.is_relative()) p = root / p;
    if (!std::filesystem::exists(p)) missing.push_back(p.string());
    rows.push_back({p, f[id_col], static_cast<int>(label), split});
  }
  if (!missing.empty()) {
    std::string msg = "missing image file(s):";
    for (const auto& m : missing) msg += " " + m;
    throw IngestionError(msg);
  }
  if (rows.empty()) throw IngestionError("manifest has no rows: " + manifest_path.string());

  // Identity numbering: numeric keys sort numerically, others keep the order
  // of first appearance.
  std::vector<std::string> keys;
  std::set<std::string> seen;
  bool all_numeric = true;
  for (const auto& r : rows) {
    if (seen.insert(r.identity).second) keys.push_back(r.identity);
    long long v;
    if (!parse_int(r.identity, v)) all_numeric = false;
  }
  if (all_numeric) {
    std::sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) {
      return std::stoll(a) < std::stoll(b);
    });
  }
  std::unordered_map<std::string, int> id_of;
  for (size_t i = 0; i < keys.size(); ++i) id_of[keys[i]] = static_cast<int>(i);

  std::vector<int> per_identity(keys.size(), 0);
  for (const auto& r : rows) ++per_identity[id_of[r.identity]];
  if (options.mode == IdentityMode::kSiamese) {
    for (size_t i = 0; i < keys.size(); ++i) {
      if (per_identity[i] < 2) {
        throw IngestionError("identity '" + keys[i] +
                             "' has fewer than 2 samples; siamese mode needs pairs");
      }
    }
  }

  int num_classes = 2;
  for (const auto& r : rows) num_classes = std::max(num_classes, r.label + 1);

  // Seeded, class-ratio-preserving assignment when no split column exists.
  if (split_col < 0) {
    const double frac[3] = {options.train_fraction, options.validation_fraction,
                            1.0 - options.train_fraction - options.validation_fraction};
    if (frac[2] < 0 || frac[0] <= 0 || frac[1] < 0) {
      throw ConfigError("split fractions must be nonnegative and sum to at most 1");
    }
    std::vector<std::vector<size_t>> groups;
    if (options.identity_disjoint) {
      groups.resize(keys.size());
      for (size_t i = 0; i < rows.size(); ++i) groups[id_of[rows[i].identity]].push_back(i);
    } else {
      for (size_t i = 0; i < rows.size(); ++i) groups.push_back({i});
    }
    std::mt19937_64 rng(options.seed);
    std::shuffle(groups.begin(), groups.end(), rng);
    std::stable_sort(groups.begin(), groups.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    std::vector<double> class_total(num_classes, 0.0);
    for (const auto& r : rows) class_total[r.label] += 1.0;
    std::vector<std::vector<double>> current(3, std::vector<double>(num_classes, 0.0));
    for (const auto& g : groups) {
      std::vector<double> gc(num_classes, 0.0);
      for (size_t i : g) gc[rows[i].label] += 1.0;
      int best = 0;
      double best_cost = std::numeric_limits<double>::infinity();
      for (int s = 0; s < 3; ++s) {
        if (frac[s] <= 0) continue;
        double cost = 0.0;
        for (int c = 0; c < num_classes; ++c) {
          const double target = frac[s] * class_total[c];
          const double before = current[s][c] - target;
          const double after = before + gc[c];
          cost += after * after - before * before;
        }
        if (cost < best_cost) {
          best_cost = cost;
          best = s;
        }
      }
      for (int c = 0; c < num_classes; ++c) current[best][c] += gc[c];
      for (size_t i : g) rows[i].split = best;
    }
  }

  DatasetSplit out;
  out.num_identities = static_cast<int>(keys.size());
  out.num_classes = num_classes;
  out.image_size = options.image_size;
  out.channels = options.channels;
  for (const auto& r : rows) {
    LabeledSample s;
    s.image = resize_image(convert_channels(read_png(r.path), options.channels),
                           options.image_size)
                  .contiguous();
    s.identity = id_of[r.identity];
    s.label = r.label;
    s.patient_key = r.identity;
    s.name = r.path.stem().string();
    split_list(out, r.split).push_back(std::move(s));
  }

  // Ground-truth factors written by the synthetic generator, when present.
  const auto factors_path = root / "factors.json";
  if (std::filesystem::exists(factors_path)) {
    std::ifstream fin(factors_path);
    const auto factors = nlohmann::json::parse(fin, nullptr, /*allow_exceptions=*/false);
    if (factors.is_array()) {
      std::unordered_map<std::string, SampleFactors> by_name;
      for (const auto& rec : factors) {
        if (!rec.contains("dx")) continue;
        SampleFactors f{rec["dx"], rec["dy"], rec["rotation_deg"], rec["brightness"],
                        rec["lesion_x"], rec["lesion_y"]};
        by_name[std::filesystem::path(rec["path"].get<std::string>()).stem().string()] = f;
      }
      for (int which = 0; which < 3; ++which) {
        for (auto& s : split_list(out, which)) {
          if (auto it = by_name.find(s.name); it != by_name.end()) s.factors = it->second;
        }
      }
    }
  }
  return out;
}

DatasetSplit load_dataset_dir(const std::filesystem::path& root, IdentityMode mode,
                              uint64_t seed, bool identity_disjoint) {
  const auto manifest = root / "manifest.csv";
  std::ifstream in(manifest);
  if (!in) throw IngestionError("cannot open manifest: " + manifest.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  const auto pos = std::find(header.begin(), header.end(), "path") - header.begin();
  if (!std::getline(in, line) || pos >= static_cast<long>(header.size())) {
    throw IngestionError("manifest has no rows: " + manifest.string());
  }
  std::filesystem::path first = split_csv_line(line).at(pos);
  if (first.is_relative()) first = root / first;
  if (!std::filesystem::exists(first)) {
    throw IngestionError("missing image file(s): " + first.string());
  }
  const auto probe = read_png(first);
  LoadOptions options;
  options.image_size = static_cast<int>(probe.size(1));
  options.channels = static_cast<int>(probe.size(0));
  options.mode = mode;
  options.seed = seed;
  options.identity_disjoint = identity_disjoint;
  return load_directory_dataset(root, manifest, options);
}

TripletSampler::TripletSampler(const std::vector<LabeledSample>& samples, IdentityMode mode)
    : samples_(samples), mode_(mode) {
  int num_identities = 0;
  for (const auto& s : samples_) {
    num_identities = std::max(num_identities, s.identity + 1);
    num_classes_ = std::max(num_classes_, s.label + 1);
  }
  by_identity_.resize(num_identities);
  by_class_.resize(num_classes_);
  identity_class_count_.assign(static_cast<size_t>(num_identities) * num_classes_, 0);
  for (size_t i = 0; i < samples_.size(); ++i) {
    by_identity_[samples_[i].identity].push_back(i);
    by_class_[samples_[i].label].push_back(i);
    ++identity_class_count_[static_cast<size_t>(samples_[i].identity) * num_classes_ +
                            samples_[i].label];
  }
  for (size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (valid_target_count(s.identity, s.label) == 0) continue;
    if (mode_ == IdentityMode::kSiamese && by_identity_[s.identity].size() < 2) continue;
    eligible_.push_back(i);
  }
}

size_t TripletSampler::valid_target_count(int identity, int label) const {
  size_t other_class = samples_.size() - by_class_[label].size();
  size_t own_identity_other_class = by_identity_[identity].size() -
      identity_class_count_[static_cast<size_t>(identity) * num_classes_ + label];
  return other_class - own_identity_other_class;
}

TrainingTriplet TripletSampler::sample(std::mt19937_64& rng) const {
  if (eligible_.empty()) {
    if (samples_.empty()) throw SamplingError("cannot sample a triplet from an empty split");
    throw SamplingError(
        mode_ == IdentityMode::kSiamese
            ? "no sample has both a target with a different class and identity and "
              "another sample of its own identity"
            : "no target with a different class and a different identity exists");
  }
  std::uniform_int_distribution<size_t> pick(0, eligible_.size() - 1);
  return sample_for(eligible_[pick(rng)], rng);
}

TrainingTriplet TripletSampler::sample_for(size_t original_index, std::mt19937_64& rng) const {
  if (original_index >= samples_.size()) throw ContractError("original index out of range");
  const auto& ori = samples_[original_index];
  const size_t valid = valid_target_count(ori.identity, ori.label);
  if (valid == 0) {
    throw SamplingError("sample '" + ori.name +
                        "' has no target with a different class and a different identity");
  }
  TrainingTriplet t;
  t.original = &ori;
  // Uniform over valid targets: enumerate them in a fixed order and pick the
  // k-th one.
  size_t k = std::uniform_int_distribution<size_t>(0, valid - 1)(rng);
  for (int c = 0; c < num_classes_ && t.target == nullptr; ++c) {
    if (c == ori.label) continue;
    const auto& list = by_class_[c];
    const size_t here = list.size() -
        identity_class_count_[static_cast<size_t>(ori.identity) * num_classes_ + c];
    if (k >= here) {
      k -= here;
      continue;
    }
    for (size_t idx : list) {
      if (samples_[idx].identity == ori.identity) continue;
      if (k == 0) {
        t.target = &samples_[idx];
        break;
      }
      --k;
    }
  }
  if (mode_ == IdentityMode::kSiamese) {
    const auto& same = by_identity_[ori.identity];
    if (same.size() < 2) {
      throw SamplingError("identity of '" + ori.name +
                          "' has a single sample; siamese mode needs a second one");
    }
    // Uniform over the other samples of the same identity.
    size_t j = std::uniform_int_distribution<size_t>(0, same.size() - 2)(rng);
    size_t idx = same[j];
    if (idx == original_index) idx = same.back();
    t.same_identity = &samples_[idx];
  }
  return t;
}

TrainingTriplet sample_triplet(const std::vector<LabeledSample>& samples, IdentityMode mode,
                               std::mt19937_64& rng) {
  return TripletSampler(samples, mode).sample(rng);
}

torch::Tensor stack_images(const std::vector<const LabeledSample*>& samples) {
  std::vector<torch::Tensor> images;
  images.reserve(samples.size());
  for (const auto* s : samples) images.push_back(s->image);
  return torch::stack(images);
}

torch::Tensor stack_images(const std::vector<LabeledSample>& samples) {
  std::vector<torch::Tensor> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(s.image);
  return torch::stack(images);
}

}  // namespace disentangle
