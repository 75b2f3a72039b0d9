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

// Alternating optimization of the disentanglement network (generator side:
// encoder, decoder, classifier heads; discriminator side: c_real) and of the
// identity VAE on top of a frozen encoder.
//
// One generator step per discriminator step. Each step runs a reconstruction
// pass (realism loss), one replacement pass whose replaced slot (identity or
// medical) is a fair coin flip (disentanglement loss), and the
// classification loss on the original's latents.

#ifndef DISENTANGLE_TRAINING_H_
#define DISENTANGLE_TRAINING_H_

#include <memory>
#include <optional>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "disentangle/checkpoint.h"
#include "disentangle/config.h"
#include "disentangle/datasets.h"
#include "disentangle/losses.h"
#include "disentangle/networks.h"

namespace disentangle {

// Random crop (resized back), brightness shift and horizontal flip, each
// drawn independently per image with its configured probability. Output is
// clipped to [0, 1]. Differentiable with respect to `images`.
torch::Tensor augment_generated(const torch::Tensor& images, const AugmentationConfig& cfg,
                                std::mt19937_64& rng);

struct TripletBatch {
  torch::Tensor original;       // [B, C, H, W]
  torch::Tensor target;         // [B, C, H, W]
  torch::Tensor same_identity;  // [B, C, H, W] or undefined
  torch::Tensor original_class;     // [B] int64
  torch::Tensor original_identity;  // [B] int64
  torch::Tensor target_class;       // [B] int64
  torch::Tensor target_identity;    // [B] int64
};

TripletBatch make_batch(const std::vector<TrainingTriplet>& triplets);

// Decodes the composition (donor's `slot`, original's other vectors) and
// re-encodes the result. The composition is built from detached latents, so
// gradients reach the encoder only through the second encoder pass.
struct ReplacementPass {
  LatentSlot slot;
  torch::Tensor generated;
  LatentTriple regenerated;
  torch::Tensor disentanglement;
};

ReplacementPass replacement_pass(NetworkBundle& bundle, const LatentTriple& ori,
                                 const LatentTriple& tar, LatentSlot slot);

class DisentanglerTrainer {
 public:
  DisentanglerTrainer(NetworkBundle& bundle, const TrainConfig& cfg);

  // One generator update followed by one discriminator update. Throws
  // TrainingError (term name and step index) before touching any parameter
  // if a loss is non-finite.
  LossBreakdown step(const TripletBatch& batch);

  int64_t steps() const { return step_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  NetworkBundle& bundle_;
  TrainConfig cfg_;
  std::unique_ptr<torch::optim::Adam> generator_opt_;
  std::unique_ptr<torch::optim::Adam> discriminator_opt_;
  std::mt19937_64 rng_;
  int64_t step_ = 0;
};

struct ValidationRecord {
  int epoch = 0;
  double ssim = 0.0;          // reconstruction SSIM
  double identity_accuracy = 0.0;
  double disease_accuracy = 0.0;
  double composite = 0.0;     // sum of min-max scaled components (final)
};

// Reconstruction SSIM, identity accuracy and disease accuracy of `bundle` on
// `samples` (inference mode). Siamese identity accuracy is pair verification:
// each sample against the next sample of its own identity (must be closer
// than t) and the next sample of another identity (must not be).
ValidationRecord validation_metrics(NetworkBundle& bundle, const std::vector<LabeledSample>& samples,
                                    const TrainConfig& cfg);

struct TrainResult {
  NetworkBundle bundle;  // best-on-validation networks
  CheckpointInfo info;
  std::vector<ValidationRecord> validations;
  std::vector<LossBreakdown> log;
};

// Runs cfg.epochs epochs over the eligible training originals. Every
// cfg.validation_every epochs the validation split is scored; the joint
// checkpoint with the highest composite (equal-weight sum of min-max scaled
// SSIM, identity and disease accuracy over the run) is returned and, when
// cfg.checkpoint_dir is set, saved there. `init` (optional) supplies the
// starting networks instead of a fresh build.
TrainResult train_disentangler(const DatasetSplit& data, const TrainConfig& cfg,
                               std::optional<NetworkBundle> init = std::nullopt);

// Network config of `cfg` completed with the dataset's shape and label counts.
NetworkConfig network_config_for(const DatasetSplit& data, const TrainConfig& cfg);

struct PrivacyBreakdown {
  int64_t step = 0;
  double reconstruction = 0.0;
  double kl = 0.0;
  double privacy = 0.0;
  double total = 0.0;
  nlohmann::json to_json() const;
};

struct VaeResult {
  IdentityVae vae{nullptr};
  CheckpointInfo info;
  std::vector<PrivacyBreakdown> log;
  std::vector<double> validation_losses;
};

// Identity features E_id(I) of `samples`, inference mode, [N, d_id].
torch::Tensor identity_features(NetworkBundle& bundle, const std::vector<LabeledSample>& samples);

// Trains the identity VAE on E_id of the training images with the bundle
// frozen. Multiclass mode adds the entropy of c_id on decoded noise; siamese
// mode adds hinges against the original and a random other patient. With
// cfg.vae_privacy_term = false the objective is a plain VAE. Selects the
// epoch with the lowest validation loss; saves to `checkpoint_dir` if given.
VaeResult train_identity_vae(NetworkBundle& bundle, const DatasetSplit& data,
                             const TrainConfig& cfg, const std::string& checkpoint_dir = "");

}  // namespace disentangle

#endif  // DISENTANGLE_TRAINING_H_
