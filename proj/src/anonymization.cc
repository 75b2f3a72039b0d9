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

#include "disentangle/anonymization.h"

#include <algorithm>
#include <map>

#include <ATen/CPUGeneratorImpl.h>

#include "disentangle/errors.h"

namespace disentangle {
namespace {

torch::Tensor as_batch(const torch::Tensor& image) {
  if (image.dim() == 3) return image.unsqueeze(0);
  if (image.dim() != 4) throw ContractError("expected an image [C,H,W] or batch [N,C,H,W]");
  return image;
}

// Decodes `base` with z_id swapped for `z_id` (one row per image).
AnonymizationResult surgery(NetworkBundle& bundle, const LatentTriple& base,
                            const torch::Tensor& z_id) {
  if (z_id.dim() != 2 || z_id.size(1) != bundle.config.d_id ||
      z_id.size(0) != base.batch_size()) {
    throw ContractError("synthetic identity must be [N, d_id]");
  }
  LatentTriple composed = base;
  composed.z_id = z_id;
  AnonymizationResult r;
  r.source_latents = base;
  r.synthetic_z_id = z_id;
  r.decoder_input = composed.concat();
  r.image = bundle.decoder->forward(r.decoder_input);
  return r;
}

}  // namespace

std::string to_string(AnonymizationMethod m) {
  switch (m) {
    case AnonymizationMethod::kVae: return "vae";
    case AnonymizationMethod::kVaeNoEntropy: return "vae_no_entropy";
    case AnonymizationMethod::kAverage: return "average_k";
  }
  return "unknown";
}

torch::Tensor sample_synthetic_identity(IdentityVae& vae, uint64_t seed, int64_t n) {
  if (n < 0) throw ContractError("sample count must be non-negative");
  torch::NoGradGuard no_grad;
  vae->eval();
  if (n == 0) return torch::zeros({0, vae->identity_dim()});
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto x = torch::randn({n, vae->latent_dim()}, gen);
  return vae->decode(x);
}

AnonymizationResult anonymize(NetworkBundle& bundle, IdentityVae& vae, const torch::Tensor& image,
                              uint64_t seed, AnonymizationMethod method) {
  if (vae->identity_dim() != bundle.config.d_id) {
    throw ContractError("VAE identity dimension " + std::to_string(vae->identity_dim()) +
                        " != d_id " + std::to_string(bundle.config.d_id));
  }
  torch::NoGradGuard no_grad;
  bundle.eval();
  const auto batch = as_batch(image);
  const LatentTriple base = encode(bundle.encoder, bundle.config, batch);
  auto r = surgery(bundle, base, sample_synthetic_identity(vae, seed, batch.size(0)));
  r.method = method;
  r.seed = seed;
  return r;
}

AnonymizationResult average_identities(NetworkBundle& bundle, const torch::Tensor& image,
                                       const torch::Tensor& donor_images) {
  const auto donors = as_batch(donor_images);
  if (donors.size(0) < 2) throw ContractError("identity averaging needs at least 2 donors");
  torch::NoGradGuard no_grad;
  bundle.eval();
  const auto batch = as_batch(image);
  const LatentTriple base = encode(bundle.encoder, bundle.config, batch);
  const auto mean = encode(bundle.encoder, bundle.config, donors).z_id.mean(0, true);
  auto r = surgery(bundle, base, mean.expand({batch.size(0), mean.size(1)}).contiguous());
  r.method = AnonymizationMethod::kAverage;
  return r;
}

std::vector<const LabeledSample*> select_donors(const std::vector<LabeledSample>& pool,
                                                int identity, int k, std::mt19937_64& rng) {
  std::map<int, std::vector<const LabeledSample*>> by_identity;
  for (const auto& s : pool) {
    if (s.identity != identity) by_identity[s.identity].push_back(&s);
  }
  std::vector<int> ids;
  for (const auto& [id, v] : by_identity) ids.push_back(id);
  const size_t want = k <= 0 ? ids.size() : static_cast<size_t>(k);
  if (want > ids.size()) {
    throw ContractError("requested " + std::to_string(want) + " donor identities, only " +
                        std::to_string(ids.size()) + " available");
  }
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<const LabeledSample*> out;
  for (size_t i = 0; i < want; ++i) {
    const auto& v = by_identity[ids[i]];
    out.push_back(v[std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng)]);
  }
  return out;
}

CounterfactualResult counterfactual(NetworkBundle& bundle, const torch::Tensor& image,
                                    const torch::Tensor& target) {
  torch::NoGradGuard no_grad;
  bundle.eval();
  const auto batch = as_batch(image);
  auto tar = as_batch(target);
  if (tar.size(0) == 1 && batch.size(0) > 1) tar = tar.expand_as(batch).contiguous();
  if (tar.sizes() != batch.sizes()) throw ContractError("target shape does not match image");
  CounterfactualResult r;
  r.source_latents = encode(bundle.encoder, bundle.config, batch);
  r.target_latents = encode(bundle.encoder, bundle.config, tar);
  const LatentTriple composed =
      replace_slot(r.source_latents, r.target_latents, LatentSlot::kMedical);
  r.decoder_input = composed.concat();
  r.image = bundle.decoder->forward(r.decoder_input);
  return r;
}

}  // namespace disentangle
