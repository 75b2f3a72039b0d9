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

// Latent surgery on a trained disentangler: identity replacement with a
// VAE-sampled or donor-averaged synthetic identity, and medical replacement
// (counterfactuals). All functions run in inference mode and accept a single
// image [C, H, W] or a batch [N, C, H, W].

#ifndef DISENTANGLE_ANONYMIZATION_H_
#define DISENTANGLE_ANONYMIZATION_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "disentangle/datasets.h"
#include "disentangle/networks.h"

namespace disentangle {

enum class AnonymizationMethod { kVae, kVaeNoEntropy, kAverage };
std::string to_string(AnonymizationMethod m);

struct AnonymizationResult {
  torch::Tensor image;           // [N, C, H, W] in [0, 1]
  torch::Tensor synthetic_z_id;  // [N, d_id]
  LatentTriple source_latents;   // encode(original)
  torch::Tensor decoder_input;   // exact [N, d_id + d_med + d_rest] fed to the decoder
  AnonymizationMethod method = AnonymizationMethod::kVae;
  uint64_t seed = 0;
};

// n draws X ~ N(0, I) decoded by the VAE, [n, d_id]. Same seed, same batch.
torch::Tensor sample_synthetic_identity(IdentityVae& vae, uint64_t seed, int64_t n);

// Replaces z_id of every image with its own synthetic identity. `method`
// is only recorded (kVae or kVaeNoEntropy, naming how the VAE was trained).
AnonymizationResult anonymize(NetworkBundle& bundle, IdentityVae& vae, const torch::Tensor& image,
                              uint64_t seed,
                              AnonymizationMethod method = AnonymizationMethod::kVae);

// Replaces z_id with the mean z_id of `donor_images` [k, C, H, W], k >= 2.
AnonymizationResult average_identities(NetworkBundle& bundle, const torch::Tensor& image,
                                       const torch::Tensor& donor_images);

// One image from each of `k` training identities other than `identity`,
// identities drawn uniformly without replacement. k <= 0 selects every other
// identity. Throws ContractError if fewer than k other identities exist.
std::vector<const LabeledSample*> select_donors(const std::vector<LabeledSample>& pool,
                                                int identity, int k, std::mt19937_64& rng);

struct CounterfactualResult {
  torch::Tensor image;
  LatentTriple source_latents;
  LatentTriple target_latents;
  torch::Tensor decoder_input;
};

// decode(z_id_ori, z_med_tar, z_rest_ori). `target` must match `image` in
// shape (or be a single image, broadcast over the batch).
CounterfactualResult counterfactual(NetworkBundle& bundle, const torch::Tensor& image,
                                    const torch::Tensor& target);

}  // namespace disentangle

#endif  // DISENTANGLE_ANONYMIZATION_H_
