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

#include "disentangle/metrics.h"

#include <cmath>
#include <sstream>

#include "disentangle/errors.h"

namespace disentangle {
namespace {

namespace F = torch::nn::functional;

torch::Tensor as_batch(const torch::Tensor& x) { return x.dim() == 3 ? x.unsqueeze(0) : x; }

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream os;
    os << what << " shape mismatch: " << a.sizes() << " vs " << b.sizes();
    throw ContractError(os.str());
  }
  if (a.dim() != 3 && a.dim() != 4) {
    throw ContractError(std::string(what) + " expects [C, H, W] or [N, C, H, W]");
  }
}

torch::Tensor gaussian_window(int size, double sigma, const torch::TensorOptions& opts) {
  auto coords = torch::arange(size, opts) - (size - 1) / 2.0;
  auto g = torch::exp(-(coords * coords) / (2.0 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g);
}

}  // namespace

void MetricConfig::validate() const {
  if (ssim_window < 3 || ssim_window % 2 == 0) {
    throw ConfigError("ssim_window must be odd and >= 3");
  }
  if (!(ssim_sigma > 0)) throw ConfigError("ssim_sigma must be positive");
  if (!(ssim_k1 > 0 && ssim_k1 < 1) || !(ssim_k2 > 0 && ssim_k2 < 1)) {
    throw ConfigError("ssim_k1 and ssim_k2 must lie in (0, 1)");
  }
  if (!(dynamic_range > 0)) throw ConfigError("dynamic_range must be positive");
  if (!(psnr_cap > 0)) throw ConfigError("psnr_cap (alpha) must be positive");
}

int effective_ssim_window(const MetricConfig& cfg, int64_t extent) {
  int w = cfg.ssim_window;
  if (w > extent) w = static_cast<int>(extent % 2 == 1 ? extent : extent - 1);
  return std::max(w, 1);
}

torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, const MetricConfig& cfg) {
  check_pair(a, b, "ssim");
  auto x = as_batch(a);
  auto y = as_batch(b);
  const int64_t channels = x.size(1);
  const int w = effective_ssim_window(cfg, std::min(x.size(2), x.size(3)));
  auto kernel = gaussian_window(w, cfg.ssim_sigma, x.options())
                    .view({1, 1, w, w})
                    .expand({channels, 1, w, w})
                    .contiguous();
  auto filter = [&](const torch::Tensor& t) {
    return F::conv2d(t, kernel, F::Conv2dFuncOptions().groups(channels));
  };
  const double c1 = std::pow(cfg.ssim_k1 * cfg.dynamic_range, 2);
  const double c2 = std::pow(cfg.ssim_k2 * cfg.dynamic_range, 2);
  auto mu_x = filter(x);
  auto mu_y = filter(y);
  auto sxx = filter(x * x) - mu_x * mu_x;
  auto syy = filter(y * y) - mu_y * mu_y;
  auto sxy = filter(x * y) - mu_x * mu_y;
  auto map = ((2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)) /
             ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2));
  return map.flatten(1).mean(1);
}

torch::Tensor psnr(const torch::Tensor& a, const torch::Tensor& b, const MetricConfig& cfg) {
  check_pair(a, b, "psnr");
  auto mse = (as_batch(a) - as_batch(b)).pow(2).flatten(1).mean(1);
  auto tiny = mse < 1e-12;
  // Substitute a harmless MSE where the cap applies so log10 never sees 0.
  auto safe = torch::where(tiny, torch::ones_like(mse), mse);
  auto value = 10.0 * torch::log10((cfg.dynamic_range * cfg.dynamic_range) / safe);
  value = torch::clamp_max(value, cfg.psnr_cap);
  return torch::where(tiny, torch::full_like(value, cfg.psnr_cap), value);
}

torch::Tensor entropy_term(const torch::Tensor& p) {
  auto rows = p.dim() == 1 ? p.unsqueeze(0) : p;
  if (rows.dim() != 2 || rows.size(1) == 0) {
    throw ContractError("entropy_term expects [K] or [N, K]");
  }
  {
    torch::NoGradGuard no_grad;
    auto d = rows.detach();
    if (!torch::isfinite(d).all().item<bool>() || (d < 0).any().item<bool>() ||
        ((d.sum(1) - 1.0).abs() > 1e-5).any().item<bool>()) {
      throw ContractError("entropy_term input is not a probability distribution");
    }
  }
  auto safe = torch::where(rows > 0, rows, torch::ones_like(rows));
  return (rows * torch::log(safe)).sum(1);
}

torch::Tensor kl_to_standard_normal(const torch::Tensor& mu, const torch::Tensor& logvar) {
  if (mu.sizes() != logvar.sizes()) throw ContractError("kl: mu and logvar shapes differ");
  {
    torch::NoGradGuard no_grad;
    if (!torch::isfinite(mu.detach()).all().item<bool>() ||
        !torch::isfinite(logvar.detach()).all().item<bool>()) {
      throw ContractError("kl: non-finite mu or logvar");
    }
  }
  auto m = mu.dim() == 1 ? mu.unsqueeze(0) : mu;
  auto lv = logvar.dim() == 1 ? logvar.unsqueeze(0) : logvar;
  return (0.5 * (m * m + torch::exp(lv) - 1.0 - lv)).sum(1);
}

}  // namespace disentangle
