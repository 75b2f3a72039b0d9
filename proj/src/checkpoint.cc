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

#include "disentangle/checkpoint.h"

#include <fstream>

#include "disentangle/errors.h"

namespace disentangle {
namespace {

namespace fs = std::filesystem;

void save_module(const torch::nn::Module& module, const fs::path& path) {
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.save_to(path.string());
}

void load_module(torch::nn::Module& module, const fs::path& path) {
  if (!fs::exists(path)) throw Error("checkpoint", "missing network blob " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  module.load(archive);
}

void write_manifest(const fs::path& dir, const CheckpointInfo& info,
                    const NetworkConfig& network) {
  nlohmann::json j = {{"kind", info.kind},
                      {"config_hash", info.config_hash},
                      {"epoch", info.epoch},
                      {"metric", info.metric},
                      {"parameter_hash", info.parameter_hash},
                      {"network", network.to_json()},
                      {"config", info.config}};
  const auto tmp = dir / "manifest.json.tmp";
  std::ofstream(tmp) << j.dump(2) << '\n';
  fs::rename(tmp, dir / "manifest.json");
}

nlohmann::json read_manifest_json(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("checkpoint", "no manifest.json in " + dir.string());
  return nlohmann::json::parse(in);
}

}  // namespace

CheckpointInfo read_manifest(const fs::path& dir) {
  const auto j = read_manifest_json(dir);
  CheckpointInfo info;
  info.kind = j.value("kind", "");
  info.config_hash = j.value("config_hash", "");
  info.epoch = j.value("epoch", 0);
  info.metric = j.value("metric", 0.0);
  info.parameter_hash = j.value("parameter_hash", "");
  info.config = j.value("config", nlohmann::json::object());
  return info;
}

void save_bundle(const NetworkBundle& bundle, const fs::path& dir, CheckpointInfo info) {
  fs::create_directories(dir);
  for (const auto& [name, module] : bundle.modules()) save_module(*module, dir / (name + ".pt"));
  info.kind = "disentangler";
  info.parameter_hash = parameter_hash(bundle);
  write_manifest(dir, info, bundle.config);
}

NetworkBundle load_bundle(const fs::path& dir, CheckpointInfo* info) {
  const auto j = read_manifest_json(dir);
  if (j.value("kind", "") != "disentangler") {
    throw Error("checkpoint", dir.string() + " is not a disentangler checkpoint");
  }
  NetworkBundle bundle = build_networks(NetworkConfig::from_json(j.at("network")));
  for (auto& [name, module] : bundle.modules()) load_module(*module, dir / (name + ".pt"));
  bundle.eval();
  if (info != nullptr) *info = read_manifest(dir);
  return bundle;
}

void save_vae(const IdentityVae& vae, const NetworkConfig& network, const fs::path& dir,
              CheckpointInfo info) {
  fs::create_directories(dir);
  auto& impl = const_cast<IdentityVaeImpl&>(*vae);
  save_module(*impl.encoder_net(), dir / "vae_encoder.pt");
  save_module(*impl.decoder_net(), dir / "vae_decoder.pt");
  info.kind = "identity_vae";
  info.parameter_hash = parameter_hash(*vae);
  write_manifest(dir, info, network);
}

IdentityVae load_vae(const fs::path& dir, NetworkConfig* network, CheckpointInfo* info) {
  const auto j = read_manifest_json(dir);
  if (j.value("kind", "") != "identity_vae") {
    throw Error("checkpoint", dir.string() + " is not an identity VAE checkpoint");
  }
  const auto cfg = NetworkConfig::from_json(j.at("network"));
  IdentityVae vae = build_identity_vae(cfg);
  load_module(*vae->encoder_net(), dir / "vae_encoder.pt");
  load_module(*vae->decoder_net(), dir / "vae_decoder.pt");
  vae->eval();
  if (network != nullptr) *network = cfg;
  if (info != nullptr) *info = read_manifest(dir);
  return vae;
}

}  // namespace disentangle
