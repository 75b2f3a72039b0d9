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

// Training objectives of the disentanglement network and of the identity
// VAE. Squared-difference terms are mean squared errors over dimensions;
// every batch reduction is the arithmetic mean.

#ifndef DISENTANGLE_LOSSES_H_
#define DISENTANGLE_LOSSES_H_

#include <map>
#include <string>

#include <torch/torch.h>

#include "disentangle/metrics.h"
#include "disentangle/networks.h"
#include "json.hpp"

namespace disentangle {

struct LossWeights {
  double lambda_med = 1.0;
  double lambda_id = 1.0;
  double lambda_r = 1.0;
  double lambda_d = 1.0;
  double alpha = 48.0;
  double margin = 0.1;
  double threshold_t = 0.05;

  void validate() const;
};

// Which realism terms are active; all on is the full objective.
struct RealismTerms {
  bool adversarial = true;
  bool ssim = true;
  bool psnr = true;
};

struct ClassificationLoss {
  torch::Tensor total;
  torch::Tensor medical;   // cross-entropy of the disease head
  torch::Tensor identity;  // cross-entropy, or siamese pair term
};

struct RealismLoss {
  torch::Tensor total;
  torch::Tensor adversarial;
  torch::Tensor ssim_term;
  torch::Tensor psnr_term;
};

struct PrivacyLoss {
  torch::Tensor total;
  torch::Tensor reconstruction;
  torch::Tensor kl;
  torch::Tensor privacy;  // entropy term or the sum of both hinges
};

// MSE(gen_i, tar_i) + sum_{j != i} MSE(gen_j, ori_j). The reference vectors
// of `ori` and `tar` are treated as constants (gradient stopped).
// `replaced` must be kIdentity or kMedical.
torch::Tensor disentanglement_loss(const LatentTriple& ori, const LatentTriple& tar,
                                   const LatentTriple& gen, LatentSlot replaced);

// lambda_med * CE(c_med_out, y_med) + lambda_id * CE(c_id_out, y_id).
// Outputs are probability rows; labels are class indices (one-hot is implied).
ClassificationLoss classification_loss_multiclass(const torch::Tensor& c_med_out,
                                                  const torch::Tensor& c_id_out,
                                                  const torch::Tensor& y_med,
                                                  const torch::Tensor& y_id,
                                                  const LossWeights& w);

// lambda_med * CE + lambda_id * (d(ori, same) + max(margin - d(ori, tar), 0)).
ClassificationLoss classification_loss_siamese(const torch::Tensor& c_med_out,
                                               const torch::Tensor& z_id_ori,
                                               const torch::Tensor& z_id_same,
                                               const torch::Tensor& z_id_tar,
                                               const torch::Tensor& y_med,
                                               const LossWeights& w);

// -log C_real(gen) + (1 - SSIM(ori, gen)) + (1 - PSNR(ori, gen) / alpha).
// `cfg.psnr_cap` must equal the alpha in use.
RealismLoss realism_loss_generator(const torch::Tensor& disc_out_on_generated,
                                   const torch::Tensor& original,
                                   const torch::Tensor& generated, const MetricConfig& cfg,
                                   const RealismTerms& terms = {});

// -log(real) - log(1 - generated), each batch-averaged.
torch::Tensor discriminator_loss(const torch::Tensor& disc_out_real,
                                 const torch::Tensor& disc_out_generated);

struct LossParts {
  torch::Tensor classification;
  torch::Tensor realism;
  torch::Tensor disentanglement;
  // Scalar sub-terms reported alongside (adversarial, ssim_term, ...).
  std::map<std::string, torch::Tensor> subterms;
};

struct LossBreakdown {
  double classification = 0.0;
  double realism = 0.0;
  double disentanglement = 0.0;
  double total = 0.0;
  std::map<std::string, double> subterms;

  // {"step": ..., "classification": ..., ..., subterms flattened}.
  nlohmann::json to_json(int64_t step) const;
};

struct TotalLoss {
  torch::Tensor value;  // differentiable
  LossBreakdown breakdown;
};

// classification + lambda_r * realism + lambda_d * disentanglement. Throws
// TrainingError naming the first non-finite term.
TotalLoss total_loss(const LossParts& parts, const LossWeights& w);

// MSE(z_id, vae_out) + KL + sum_k p_k log p_k of the identity classifier on
// sampled identities (the last term dropped when `use_entropy` is false).
PrivacyLoss privacy_loss_multiclass(const torch::Tensor& z_id, const torch::Tensor& vae_out,
                                    const torch::Tensor& mu, const torch::Tensor& logvar,
                                    const torch::Tensor& c_id_on_sampled,
                                    bool use_entropy = true);

// MSE + KL + max(margin - d(z_id, z_s), 0) + max(margin - d(z_other, z_s), 0).
PrivacyLoss privacy_loss_siamese(const torch::Tensor& z_id, const torch::Tensor& z_id_other,
                                 const torch::Tensor& vae_out, const torch::Tensor& mu,
                                 const torch::Tensor& logvar, const torch::Tensor& z_sampled,
                                 const LossWeights& w, bool use_hinge = true);

}  // namespace disentangle

#endif  // DISENTANGLE_LOSSES_H_
