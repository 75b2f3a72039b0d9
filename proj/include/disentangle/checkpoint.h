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

// Checkpoint directories: one `<network>.pt` blob per network and a
// `manifest.json` with {config_hash, epoch, metric, kind, network, config}.

#ifndef DISENTANGLE_CHECKPOINT_H_
#define DISENTANGLE_CHECKPOINT_H_

#include <filesystem>
#include <string>

#include "disentangle/networks.h"
#include "json.hpp"

namespace disentangle {

struct CheckpointInfo {
  std::string kind;  // "disentangler" or "identity_vae"
  std::string config_hash;
  int epoch = 0;
  double metric = 0.0;
  nlohmann::json config = nlohmann::json::object();  // TrainConfig snapshot
  std::string parameter_hash;                         // filled on save
};

void save_bundle(const NetworkBundle& bundle, const std::filesystem::path& dir,
                 CheckpointInfo info);
NetworkBundle load_bundle(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

void save_vae(const IdentityVae& vae, const NetworkConfig& network,
              const std::filesystem::path& dir, CheckpointInfo info);
IdentityVae load_vae(const std::filesystem::path& dir, NetworkConfig* network = nullptr,
                     CheckpointInfo* info = nullptr);

CheckpointInfo read_manifest(const std::filesystem::path& dir);

}  // namespace disentangle

#endif  // DISENTANGLE_CHECKPOINT_H_
