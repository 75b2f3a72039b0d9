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

#ifndef DISENTANGLE_TESTS_TEST_UTIL_H_
#define DISENTANGLE_TESTS_TEST_UTIL_H_

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <torch/torch.h>

#include "disentangle/datasets.h"
#include "disentangle/networks.h"
#include "reference/reference.h"

namespace testutil {

inline ref::Vec to_vec(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous().flatten();
  return ref::Vec(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

inline ref::Mat to_mat(const torch::Tensor& t) {
  ref::Mat m;
  for (int64_t i = 0; i < t.size(0); ++i) m.push_back(to_vec(t[i]));
  return m;
}

inline ref::Image to_image(const torch::Tensor& chw) {
  ref::Image im;
  im.c = static_cast<int>(chw.size(0));
  im.h = static_cast<int>(chw.size(1));
  im.w = static_cast<int>(chw.size(2));
  im.px = to_vec(chw);
  return im;
}

inline std::vector<int> to_ints(const torch::Tensor& t) {
  std::vector<int> v;
  for (int64_t i = 0; i < t.size(0); ++i) v.push_back(static_cast<int>(t[i].item<int64_t>()));
  return v;
}

// Miniature network config that builds in milliseconds.
inline disentangle::NetworkConfig tiny_config(
    disentangle::IdentityMode mode = disentangle::IdentityMode::kSiamese) {
  disentangle::NetworkConfig c;
  c.image_size = 16;
  c.channels = 1;
  c.d_id = 4;
  c.d_med = 4;
  c.d_rest = 4;
  c.stages = 2;
  c.base_width = 4;
  c.hidden = 8;
  c.vae_latent = 3;
  c.vae_hidden = 8;
  c.num_identities = 3;
  c.num_classes = 2;
  c.mode = mode;
  c.seed = 5;
  return c;
}

// Small synthetic dataset (3 identities, 2 classes, 16 px).
inline disentangle::DatasetSplit tiny_dataset(int train = 36, uint64_t seed = 3) {
  disentangle::FactorSpec s;
  s.num_identities = 3;
  s.num_classes = 2;
  s.image_size = 16;
  s.train_samples = train;
  s.validation_samples = 12;
  s.test_samples = 12;
  s.seed = seed;
  return disentangle::generate_synthetic(s);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() /
           ("disentangle_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.dtype() == b.dtype() && torch::equal(a, b);
}

}  // namespace testutil

#endif  // DISENTANGLE_TESTS_TEST_UTIL_H_
