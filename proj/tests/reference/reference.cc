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

#include "reference.h"

#include <algorithm>
#include <cmath>

namespace ref {

double ssim(const Image& a, const Image& b, int window, double sigma, double k1, double k2,
            double range) {
  int win = window;
  const int extent = std::min(a.h, a.w);
  if (win > extent) win = extent % 2 ? extent : extent - 1;
  // 2-D Gaussian weights, normalized to sum 1.
  std::vector<double> g(win * win);
  double total = 0;
  const double half = (win - 1) / 2.0;
  for (int i = 0; i < win; ++i) {
    for (int j = 0; j < win; ++j) {
      const double di = i - half, dj = j - half;
      g[i * win + j] = std::exp(-(di * di) / (2 * sigma * sigma)) *
                       std::exp(-(dj * dj) / (2 * sigma * sigma));
      total += g[i * win + j];
    }
  }
  for (double& v : g) v /= total;
  const double c1 = (k1 * range) * (k1 * range);
  const double c2 = (k2 * range) * (k2 * range);
  double sum = 0;
  int count = 0;
  for (int ch = 0; ch < a.c; ++ch) {
    for (int y = 0; y + win <= a.h; ++y) {
      for (int x = 0; x + win <= a.w; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < win; ++i) {
          for (int j = 0; j < win; ++j) {
            const double wgt = g[i * win + j];
            const double va = a.at(ch, y + i, x + j), vb = b.at(ch, y + i, x + j);
            ma += wgt * va;
            mb += wgt * vb;
            saa += wgt * va * va;
            sbb += wgt * vb * vb;
            sab += wgt * va * vb;
          }
        }
        saa -= ma * ma;
        sbb -= mb * mb;
        sab -= ma * mb;
        sum += ((2 * ma * mb + c1) * (2 * sab + c2)) /
               ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
        ++count;
      }
    }
  }
  return sum / count;
}

double psnr(const Image& a, const Image& b, double range, double cap) {
  double s = 0;
  for (size_t i = 0; i < a.px.size(); ++i) s += (a.px[i] - b.px[i]) * (a.px[i] - b.px[i]);
  const double m = s / a.px.size();
  if (m < 1e-12) return cap;
  return std::min(cap, 10 * std::log10(range * range / m));
}

double entropy_term(const Vec& p) {
  double s = 0;
  for (double v : p) {
    if (v > 0) s += v * std::log(v);
  }
  return s;
}

double kl(const Vec& mu, const Vec& logvar) {
  double s = 0;
  for (size_t i = 0; i < mu.size(); ++i) {
    s += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1 - logvar[i]);
  }
  return s;
}

double mse(const Vec& a, const Vec& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / a.size();
}

double mse_mean(const Mat& a, const Mat& b) {
  double s = 0;
  for (size_t n = 0; n < a.size(); ++n) s += mse(a[n], b[n]);
  return s / a.size();
}

double kl_mean(const Mat& mu, const Mat& logvar) {
  double s = 0;
  for (size_t n = 0; n < mu.size(); ++n) s += kl(mu[n], logvar[n]);
  return s / mu.size();
}

double disentanglement(const std::vector<Triple>& ori, const std::vector<Triple>& tar,
                       const std::vector<Triple>& gen, int replaced) {
  double total = 0;
  for (int s = 0; s < 3; ++s) {
    double acc = 0;
    for (size_t n = 0; n < gen.size(); ++n) {
      acc += mse(gen[n].slot(s), s == replaced ? tar[n].slot(s) : ori[n].slot(s));
    }
    total += acc / gen.size();
  }
  return total;
}

double cross_entropy(const Mat& probs, const std::vector<int>& labels) {
  double s = 0;
  for (size_t n = 0; n < probs.size(); ++n) {
    s -= std::log(std::max(probs[n][labels[n]], 1e-12));
  }
  return s / probs.size();
}

double classification_multiclass(const Mat& med, const Mat& id, const std::vector<int>& y_med,
                                 const std::vector<int>& y_id, double l_med, double l_id) {
  return l_med * cross_entropy(med, y_med) + l_id * cross_entropy(id, y_id);
}

double classification_siamese(const Mat& med, const Mat& z_ori, const Mat& z_same,
                              const Mat& z_tar, const std::vector<int>& y_med, double l_med,
                              double l_id, double margin) {
  double pair = 0;
  for (size_t n = 0; n < z_ori.size(); ++n) {
    pair += mse(z_ori[n], z_same[n]) + std::max(margin - mse(z_ori[n], z_tar[n]), 0.0);
  }
  return l_med * cross_entropy(med, y_med) + l_id * pair / z_ori.size();
}

double realism(const Vec& disc, const std::vector<Image>& ori, const std::vector<Image>& gen,
               int window, double alpha) {
  double adv = 0;
  for (double d : disc) adv -= std::log(d);
  adv /= disc.size();
  double s = 0, p = 0;
  for (size_t n = 0; n < ori.size(); ++n) {
    s += 1 - ssim(ori[n], gen[n], window, 1.5, 0.01, 0.03, 1.0);
    p += 1 - psnr(ori[n], gen[n], 1.0, alpha) / alpha;
  }
  return adv + s / ori.size() + p / ori.size();
}

double discriminator(const Vec& real, const Vec& fake) {
  double a = 0, b = 0;
  for (double r : real) a -= std::log(r);
  for (double f : fake) b -= std::log(1 - f);
  return a / real.size() + b / fake.size();
}

double privacy_multiclass(const Mat& z, const Mat& recon, const Mat& mu, const Mat& logvar,
                          const Mat& c_id_sampled) {
  double r = 0, k = 0, e = 0;
  for (size_t n = 0; n < z.size(); ++n) {
    r += mse(z[n], recon[n]);
    k += kl(mu[n], logvar[n]);
  }
  for (const auto& p : c_id_sampled) e += entropy_term(p);
  return r / z.size() + k / z.size() + e / c_id_sampled.size();
}

double privacy_siamese(const Mat& z, const Mat& z_other, const Mat& recon, const Mat& mu,
                       const Mat& logvar, const Mat& z_s, double margin) {
  double r = 0, k = 0, h = 0;
  for (size_t n = 0; n < z.size(); ++n) {
    r += mse(z[n], recon[n]);
    k += kl(mu[n], logvar[n]);
    h += std::max(margin - mse(z[n], z_s[n]), 0.0) + std::max(margin - mse(z_other[n], z_s[n]), 0.0);
  }
  return (r + k + h) / z.size();
}

}  // namespace ref
