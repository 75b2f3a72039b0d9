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

#include "disentangle/losses.h"

#include <cmath>
#include <sstream>

#include "disentangle/errors.h"

namespace disentangle {
namespace {

torch::Tensor mse_rows(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream os;
    os << "vector shape mismatch: " << a.sizes() << " vs " << b.sizes();
    throw ContractError(os.str());
  }
  return (a - b).pow(2).mean(-1);
}

void check_distribution(const torch::Tensor& p, const char* name) {
  torch::NoGradGuard no_grad;
  if (p.dim() != 2) throw ContractError(std::string(name) + " must be [N, K]");
  auto d = p.detach();
  // Non-finite rows pass through; total_loss reports them by term name.
  if (!torch::isfinite(d).all().item<bool>()) return;
  if ((d < 0).any().item<bool>() || ((d.sum(1) - 1.0).abs() > 1e-5).any().item<bool>()) {
    throw ContractError(std::string(name) + " rows are not probability distributions");
  }
}

// Mean over the batch of -log p[y].
torch::Tensor cross_entropy(const torch::Tensor& probs, const torch::Tensor& labels,
                            const char* name) {
  check_distribution(probs, name);
  if (labels.dim() != 1 || labels.size(0) != probs.size(0)) {
    throw ContractError(std::string(name) + ": label count does not match batch size");
  }
  auto y = labels.to(torch::kLong);
  if ((y < 0).any().item<bool>() || (y >= probs.size(1)).any().item<bool>()) {
    throw ContractError(std::string(name) + ": label outside the " +
                        std::to_string(probs.size(1)) + "-class range");
  }
  auto one_hot = torch::one_hot(y, probs.size(1)).to(probs.dtype());
  return -(one_hot * torch::log(probs.clamp_min(1e-12))).sum(1).mean();
}

void check_open_unit(const torch::Tensor& p, const char* name) {
  torch::NoGradGuard no_grad;
  auto d = p.detach();
  if (!torch::isfinite(d).all().item<bool>()) return;
  if ((d <= 0).any().item<bool>() || (d >= 1).any().item<bool>()) {
    throw ContractError(std::string(name) + " must lie strictly inside (0, 1)");
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_med, lambda_id, lambda_r, lambda_d}) {
    if (!std::isfinite(v) || v < 0) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (!std::isfinite(alpha) || alpha <= 0) throw ConfigError("alpha must be positive");
  if (!std::isfinite(margin) || margin <= 0) throw ConfigError("margin must be positive");
  if (!std::isfinite(threshold_t) || threshold_t <= 0) {
    throw ConfigError("threshold_t must be positive");
  }
  if (margin <= threshold_t) throw ConfigError("margin must exceed threshold_t");
}

torch::Tensor disentanglement_loss(const LatentTriple& ori, const LatentTriple& tar,
                                   const LatentTriple& gen, LatentSlot replaced) {
  if (replaced == LatentSlot::kRest) {
    throw ContractError("the residual vector is never the replaced slot");
  }
  torch::Tensor loss = mse_rows(gen.slot(replaced), tar.slot(replaced).detach()).mean();
  for (LatentSlot s : {LatentSlot::kIdentity, LatentSlot::kMedical, LatentSlot::kRest}) {
    if (s == replaced) continue;
    loss = loss + mse_rows(gen.slot(s), ori.slot(s).detach()).mean();
  }
  return loss;
}

ClassificationLoss classification_loss_multiclass(const torch::Tensor& c_med_out,
                                                  const torch::Tensor& c_id_out,
                                                  const torch::Tensor& y_med,
                                                  const torch::Tensor& y_id,
                                                  const LossWeights& w) {
  ClassificationLoss out;
  out.medical = cross_entropy(c_med_out, y_med, "disease classifier output");
  out.identity = cross_entropy(c_id_out, y_id, "identity classifier output");
  out.total = w.lambda_med * out.medical + w.lambda_id * out.identity;
  return out;
}

ClassificationLoss classification_loss_siamese(const torch::Tensor& c_med_out,
                                               const torch::Tensor& z_id_ori,
                                               const torch::Tensor& z_id_same,
                                               const torch::Tensor& z_id_tar,
                                               const torch::Tensor& y_med,
                                               const LossWeights& w) {
  if (!z_id_same.defined()) {
    throw ContractError("siamese classification needs the same-identity embedding");
  }
  ClassificationLoss out;
  out.medical = cross_entropy(c_med_out, y_med, "disease classifier output");
  auto positive = mse_rows(z_id_ori, z_id_same);
  auto negative = torch::clamp_min(w.margin - mse_rows(z_id_ori, z_id_tar), 0.0);
  out.identity = (positive + negative).mean();
  out.total = w.lambda_med * out.medical + w.lambda_id * out.identity;
  return out;
}

RealismLoss realism_loss_generator(const torch::Tensor& disc_out_on_generated,
                                   const torch::Tensor& original,
                                   const torch::Tensor& generated, const MetricConfig& cfg,
                                   const RealismTerms& terms) {
  RealismLoss out;
  auto zero = torch::zeros({}, generated.options());
  if (terms.adversarial) {
    check_open_unit(disc_out_on_generated, "discriminator output");
    out.adversarial = -torch::log(disc_out_on_generated).mean();
  } else {
    out.adversarial = zero;
  }
  out.ssim_term = terms.ssim ? (1.0 - ssim(original, generated, cfg)).mean() : zero;
  out.psnr_term =
      terms.psnr ? (1.0 - psnr(original, generated, cfg) / cfg.psnr_cap).mean() : zero;
  out.total = out.adversarial + out.ssim_term + out.psnr_term;
  return out;
}

torch::Tensor discriminator_loss(const torch::Tensor& disc_out_real,
                                 const torch::Tensor& disc_out_generated) {
  check_open_unit(disc_out_real, "discriminator output on real images");
  check_open_unit(disc_out_generated, "discriminator output on generated images");
  return -torch::log(disc_out_real).mean() - torch::log(1.0 - disc_out_generated).mean();
}

nlohmann::json LossBreakdown::to_json(int64_t step) const {
  nlohmann::json j = {{"step", step},
                      {"classification", classification},
                      {"realism", realism},
                      {"disentanglement", disentanglement},
                      {"total", total}};
  for (const auto& [k, v] : subterms) j[k] = v;
  return j;
}

TotalLoss total_loss(const LossParts& parts, const LossWeights& w) {
  auto value_of = [](const torch::Tensor& t, const std::string& name) {
    if (!t.defined()) throw ContractError("loss term '" + name + "' is undefined");
    const double v = t.detach().item<double>();
    if (!std::isfinite(v)) throw TrainingError("non-finite loss term '" + name + "'");
    return v;
  };
  TotalLoss out;
  auto& b = out.breakdown;
  b.classification = value_of(parts.classification, "classification");
  b.realism = value_of(parts.realism, "realism");
  b.disentanglement = value_of(parts.disentanglement, "disentanglement");
  for (const auto& [k, t] : parts.subterms) b.subterms[k] = value_of(t, k);
  out.value = parts.classification + w.lambda_r * parts.realism +
              w.lambda_d * parts.disentanglement;
  b.total = b.classification + w.lambda_r * b.realism + w.lambda_d * b.disentanglement;
  return out;
}

PrivacyLoss privacy_loss_multiclass(const torch::Tensor& z_id, const torch::Tensor& vae_out,
                                    const torch::Tensor& mu, const torch::Tensor& logvar,
                                    const torch::Tensor& c_id_on_sampled, bool use_entropy) {
  PrivacyLoss out;
  out.reconstruction = mse_rows(z_id, vae_out).mean();
  out.kl = kl_to_standard_normal(mu, logvar).mean();
  out.privacy = use_entropy ? entropy_term(c_id_on_sampled).mean()
                            : torch::zeros({}, z_id.options());
  out.total = out.reconstruction + out.kl + out.privacy;
  return out;
}

PrivacyLoss privacy_loss_siamese(const torch::Tensor& z_id, const torch::Tensor& z_id_other,
                                 const torch::Tensor& vae_out, const torch::Tensor& mu,
                                 const torch::Tensor& logvar, const torch::Tensor& z_sampled,
                                 const LossWeights& w, bool use_hinge) {
  PrivacyLoss out;
  out.reconstruction = mse_rows(z_id, vae_out).mean();
  out.kl = kl_to_standard_normal(mu, logvar).mean();
  if (use_hinge) {
    auto own = torch::clamp_min(w.margin - mse_rows(z_id, z_sampled), 0.0);
    auto other = torch::clamp_min(w.margin - mse_rows(z_id_other, z_sampled), 0.0);
    out.privacy = (own + other).mean();
  } else {
    out.privacy = torch::zeros({}, z_id.options());
  }
  out.total = out.reconstruction + out.kl + out.privacy;
  return out;
}

}  // namespace disentangle
