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

// Training configuration, named presets and the flat key/value view used by
// config files and command-line flags.
//
// Resolution order, lowest to highest priority: built-in defaults, preset,
// config file, flags. Every key of TrainConfig has exactly one entry in
// train_config_keys(); to_json() and the CLI help are generated from it.

#ifndef DISENTANGLE_CONFIG_H_
#define DISENTANGLE_CONFIG_H_

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "disentangle/datasets.h"
#include "disentangle/losses.h"
#include "disentangle/metrics.h"
#include "disentangle/networks.h"
#include "json.hpp"

namespace disentangle {

struct AugmentationConfig {
  double crop_fraction = 0.875;  // retained side length
  double crop_probability = 0.5;
  double brightness_delta = 0.2;
  double brightness_probability = 0.5;
  double flip_probability = 0.5;

  void validate() const;
};

struct TrainConfig {
  IdentityMode mode = IdentityMode::kSiamese;
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  LossWeights weights;
  uint64_t seed = 0;
  AugmentationConfig augmentation;
  // Augment the discriminator's inputs (real and generated).
  bool augment_discriminator = true;
  RealismTerms realism;
  int validation_every = 1;
  std::string checkpoint_dir;
  std::string log_path;  // JSON lines, one record per step; empty disables
  bool freeze_classifiers = false;
  NetworkConfig network;
  MetricConfig metrics;
  // Identity VAE.
  int vae_epochs = 50;
  int vae_batch_size = 64;
  double vae_learning_rate = 1e-3;
  bool vae_privacy_term = true;

  // Throws ConfigError on any violated bound.
  void validate() const;
  // Flat {key: value-string} snapshot; sufficient to reproduce the config.
  nlohmann::json to_json() const;
  // 16 hex digits, FNV-1a of the canonical to_json() dump.
  std::string hash() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<ConfigKey>& train_config_keys();

// Parses and assigns one key; ConfigError for unknown keys or bad values.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

// Rebuilds a config from a to_json() snapshot.
TrainConfig train_config_from_json(const nlohmann::json& j);

std::vector<std::string> preset_names();
// chest / face / iris: loss weights, identity mode and full-scale epochs.
void apply_preset(TrainConfig& cfg, const std::string& name);

// `key = value` lines; `#` starts a comment; `[section]` headers are ignored;
// values may be double-quoted.
std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path);

// Defaults, then preset (if non-empty), then file (if non-empty), then
// `overrides` in order.
TrainConfig resolve_config(const std::string& preset, const std::filesystem::path& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace disentangle

#endif  // DISENTANGLE_CONFIG_H_
