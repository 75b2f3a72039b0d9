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

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "disentangle/errors.h"
#include "disentangle/evaluation.h"
#include "disentangle/training.h"

namespace disentangle {
namespace {

struct VariantSpec {
  std::string label;
  RealismTerms terms;
  bool augment;
  bool finetune;
};

const std::map<std::string, VariantSpec>& variant_specs() {
  static const std::map<std::string, VariantSpec> specs = {
      {"only_ssim", {"Only SSIM", {false, true, false}, false, false}},
      {"only_psnr", {"Only PSNR", {false, false, true}, false, false}},
      {"ssim_psnr", {"SSIM and PSNR", {false, true, true}, false, false}},
      {"gan_no_aug", {"GAN with SSIM and PSNR", {true, true, true}, false, false}},
      {"gan_aug_finetune", {"Fine-tuned augmented GAN", {true, true, true}, true, true}},
      {"gan_aug_scratch", {"Augmented GAN (final model)", {true, true, true}, true, false}},
  };
  return specs;
}

const std::vector<LabeledSample>& report_split(const DatasetSplit& data) {
  if (!data.test.empty()) return data.test;
  if (!data.validation.empty()) return data.validation;
  throw ConfigError("ablation needs a test or validation split");
}

TrainConfig variant_config(const TrainConfig& base, const std::string& name) {
  TrainConfig c = base;
  if (!base.checkpoint_dir.empty()) {
    const auto dir = std::filesystem::path(base.checkpoint_dir) / name;
    std::filesystem::create_directories(dir);
    c.checkpoint_dir = dir.string();
    c.log_path = (dir / "loss.jsonl").string();
  } else {
    c.log_path.clear();
  }
  return c;
}

AblationRow score(const std::string& variant, NetworkBundle& bundle, const DatasetSplit& data,
                  const TrainConfig& cfg, std::string init_hash) {
  const ValidationRecord v = validation_metrics(bundle, report_split(data), cfg);
  AblationRow row;
  row.variant = variant;
  row.ssim = v.ssim;
  row.identity_accuracy = v.identity_accuracy;
  row.disease_accuracy = v.disease_accuracy;
  row.train_size = data.train.size();
  row.init_hash = std::move(init_hash);
  row.final_hash = parameter_hash(bundle);
  return row;
}

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v << "%";
  return s.str();
}

}  // namespace

const std::vector<std::string>& realism_variants() {
  static const std::vector<std::string> names = {"only_ssim",  "only_psnr",        "ssim_psnr",
                                                 "gan_no_aug", "gan_aug_finetune", "gan_aug_scratch"};
  return names;
}

std::string realism_variant_label(const std::string& variant) {
  const auto it = variant_specs().find(variant);
  if (it == variant_specs().end()) throw ConfigError("unknown ablation variant '" + variant + "'");
  return it->second.label;
}

AblationTable run_ablation_realism(const DatasetSplit& data, const TrainConfig& cfg,
                                   const std::vector<std::string>& variants) {
  for (const auto& v : variants) realism_variant_label(v);
  AblationTable table;
  table.kind = "realism";
  std::optional<NetworkBundle> ssim_psnr;

  auto train_variant = [&](const std::string& name) {
    const VariantSpec& spec = variant_specs().at(name);
    TrainConfig c = variant_config(cfg, name);
    c.realism = spec.terms;
    c.augment_discriminator = spec.augment;
    std::optional<NetworkBundle> init;
    if (spec.finetune) {
      if (!ssim_psnr) {
        TrainConfig pc = variant_config(cfg, "ssim_psnr");
        pc.realism = variant_specs().at("ssim_psnr").terms;
        pc.augment_discriminator = false;
        ssim_psnr = train_disentangler(data, pc).bundle;
      }
      init = ssim_psnr;
    }
    const std::string init_hash =
        init ? parameter_hash(*init) : parameter_hash(build_networks(network_config_for(data, c)));
    TrainResult r = train_disentangler(data, c, init);
    if (name == "ssim_psnr") ssim_psnr = r.bundle;
    return score(name, r.bundle, data, c, init_hash);
  };

  // ssim_psnr first so the fine-tuned variant reuses its networks.
  std::vector<std::string> order = variants;
  std::stable_partition(order.begin(), order.end(),
                        [](const std::string& v) { return v == "ssim_psnr"; });
  std::map<std::string, AblationRow> rows;
  for (const auto& v : order) {
    if (!rows.count(v)) rows[v] = train_variant(v);
  }
  for (const auto& v : variants) {
    table.rows.push_back(rows.at(v));
  }
  return table;
}

std::vector<LabeledSample> nested_subset(const std::vector<LabeledSample>& samples, size_t n,
                                         uint64_t seed) {
  if (n > samples.size()) {
    throw ConfigError("subset size " + std::to_string(n) + " exceeds the " +
                      std::to_string(samples.size()) + " available samples");
  }
  std::vector<size_t> perm(samples.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed ^ 0xda7a5e7ULL);
  std::shuffle(perm.begin(), perm.end(), rng);
  // Chosen samples keep their original order, so n = size is the split itself.
  std::sort(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(samples[perm[i]]);
  return out;
}

AblationTable run_ablation_datasize(const DatasetSplit& data, const TrainConfig& cfg,
                                    const std::vector<size_t>& sizes) {
  for (size_t n : sizes) {
    if (n == 0 || n > data.train.size()) {
      throw ConfigError("dataset size " + std::to_string(n) + " outside [1, " +
                        std::to_string(data.train.size()) + "]");
    }
  }
  AblationTable table;
  table.kind = "datasize";
  for (size_t n : sizes) {
    DatasetSplit d = data;
    d.train = nested_subset(data.train, n, cfg.seed);
    const std::string name = "size_" + std::to_string(n);
    TrainConfig c = variant_config(cfg, name);
    const std::string init_hash = parameter_hash(build_networks(network_config_for(d, c)));
    TrainResult r = train_disentangler(d, c);
    table.rows.push_back(score(name, r.bundle, d, c, init_hash));
  }
  return table;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"variant", r.variant},
                        {"ssim", r.ssim},
                        {"identity_accuracy", r.identity_accuracy},
                        {"disease_accuracy", r.disease_accuracy},
                        {"train_size", r.train_size},
                        {"init_hash", r.init_hash},
                        {"final_hash", r.final_hash}};
    if (kind == "realism") j["label"] = realism_variant_label(r.variant);
    rows_j.push_back(j);
  }
  return {{"kind", kind}, {"rows", rows_j}};
}

std::string AblationTable::to_text() const {
  std::vector<std::vector<std::string>> cells;
  if (kind == "realism") {
    cells.push_back({"Realism Loss", "SSIM"});
    for (const auto& r : rows) cells.push_back({realism_variant_label(r.variant), pct(r.ssim)});
  } else {
    cells.push_back({"N. Images", "SSIM", "Identity Rec.", "Disease Rec."});
    for (const auto& r : rows) {
      cells.push_back({std::to_string(r.train_size), pct(r.ssim), pct(r.identity_accuracy),
                       pct(r.disease_accuracy)});
    }
  }
  std::vector<size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : cells) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out << "  ";
      out << (c == 0 ? std::left : std::right) << std::setw(static_cast<int>(width[c])) << row[c];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace disentangle
