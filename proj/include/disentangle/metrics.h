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

// Differentiable image and distribution metrics. All functions accept a
// single item or a batch and return one value per item; they keep the input
// dtype so the same code serves training (float32) and gradient checks
// (float64).

#ifndef DISENTANGLE_METRICS_H_
#define DISENTANGLE_METRICS_H_

#include <torch/torch.h>

#include "json.hpp"

namespace disentangle {

struct MetricConfig {
  int ssim_window = 11;  // clipped to the largest odd size that fits the image
  double ssim_sigma = 1.5;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  double dynamic_range = 1.0;
  double psnr_cap = 48.0;  // alpha

  void validate() const;
};

// Window side actually used for an image of side `extent`.
int effective_ssim_window(const MetricConfig& cfg, int64_t extent);

// Mean SSIM over all valid Gaussian-weighted windows (no padding), averaged
// over channels. Inputs [C, H, W] or [N, C, H, W]; returns [N].
torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, const MetricConfig& cfg);

// 10 log10(L^2 / MSE) per item, capped at cfg.psnr_cap; the cap is returned
// when MSE < 1e-12.
torch::Tensor psnr(const torch::Tensor& a, const torch::Tensor& b, const MetricConfig& cfg);

// sum_k p_k log p_k with 0 log 0 = 0 (negative entropy, natural log).
// p is [K] or [N, K]; every row must be a distribution within 1e-5.
torch::Tensor entropy_term(const torch::Tensor& p);

// KL(N(mu, exp(logvar)) || N(0, I)) summed over dimensions; [d] or [N, d].
torch::Tensor kl_to_standard_normal(const torch::Tensor& mu, const torch::Tensor& logvar);

}  // namespace disentangle

#endif  // DISENTANGLE_METRICS_H_
