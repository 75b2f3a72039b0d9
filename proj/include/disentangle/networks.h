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

// The parametric functions of the disentanglement model:
//
//   Encoder        image -> (z_id, z_med, z_rest)
//   Decoder        (z_id, z_med, z_rest) -> image in [0, 1]
//   Classifier     latent -> class probabilities (disease head, and the
//                  identity head in multiclass mode)
//   Discriminator  image -> probability that the image is real
//   IdentityVae    z_id -> (mu, logvar) -> z_id, sampler of synthetic ids
//
// Encoder, decoder and discriminator are residual convolutional stacks; every
// stage halves (or doubles) the spatial size. Classifiers and the VAE halves
// are one-hidden-layer perceptrons with dropout.

#ifndef DISENTANGLE_NETWORKS_H_
#define DISENTANGLE_NETWORKS_H_

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "disentangle/datasets.h"
#include "json.hpp"

namespace disentangle {

struct NetworkConfig {
  int image_size = 32;
  int channels = 1;
  int d_id = 32;
  int d_med = 16;
  int d_rest = 80;
  int stages = 3;
  int base_width = 32;
  int hidden = 64;  // classifier hidden units
  double dropout = 0.3;
  int num_identities = 8;
  int num_classes = 2;
  IdentityMode mode = IdentityMode::kSiamese;
  int vae_latent = 16;
  int vae_hidden = 64;
  uint64_t seed = 0;
  std::string init = "he_uniform";  // or "xavier_uniform"

  void validate() const;
  int latent_dim() const { return d_id + d_med + d_rest; }
  int bottleneck_size() const { return image_size >> stages; }
  // Channel count after encoder stage s (s = 0 is the stem).
  int width(int s) const;

  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
};

enum class LatentSlot { kIdentity, kMedical, kRest };
std::string to_string(LatentSlot slot);

// Batched encoder output; every member is [N, d].
struct LatentTriple {
  torch::Tensor z_id;
  torch::Tensor z_med;
  torch::Tensor z_rest;

  // Concatenation in the fixed order (z_id, z_med, z_rest).
  torch::Tensor concat() const;
  static LatentTriple split(const torch::Tensor& projection, int d_id, int d_med,
                            int d_rest);
  const torch::Tensor& slot(LatentSlot s) const;
  torch::Tensor& slot(LatentSlot s);
  LatentTriple detach() const;
  // Rows [begin, end).
  LatentTriple rows(int64_t begin, int64_t end) const;
  int64_t batch_size() const { return z_id.size(0); }
};

// `base` with slot `slot` taken from `donor`.
LatentTriple replace_slot(const LatentTriple& base, const LatentTriple& donor,
                          LatentSlot slot);

enum class Resample { kNone, kDown, kUp };

class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int in_channels, int out_channels, Resample resample);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::Tensor resample(const torch::Tensor& x) const;

  Resample resample_;
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d skip_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const NetworkConfig& config);
  // Full latent projection [N, d_id + d_med + d_rest].
  torch::Tensor project(const torch::Tensor& images);
  LatentTriple forward(const torch::Tensor& images);

 private:
  NetworkConfig config_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::Sequential blocks_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Encoder);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const NetworkConfig& config);
  torch::Tensor forward(const torch::Tensor& latent);

 private:
  NetworkConfig config_;
  torch::nn::Linear head_{nullptr};
  torch::nn::Sequential blocks_;
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(Decoder);

class ClassifierImpl : public torch::nn::Module {
 public:
  ClassifierImpl(int in_features, int hidden, int classes, double dropout);
  torch::Tensor logits(const torch::Tensor& x);
  // Class probabilities (softmax over the last dimension).
  torch::Tensor forward(const torch::Tensor& x);
  int classes() const { return classes_; }
  int in_features() const { return in_features_; }

 private:
  int in_features_;
  int classes_;
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(Classifier);

// Probability outputs are squashed into [eps, 1 - eps] so downstream
// log-likelihood terms stay finite without losing the gradient.
inline constexpr double kProbabilityFloor = 1e-4;

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const NetworkConfig& config);
  torch::Tensor forward(const torch::Tensor& images);  // [N] in (0, 1)

 private:
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::Sequential blocks_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

struct VaeOutput {
  torch::Tensor reconstruction;
  torch::Tensor mu;
  torch::Tensor logvar;
};

class IdentityVaeImpl : public torch::nn::Module {
 public:
  IdentityVaeImpl(int d_id, int hidden, int latent, double dropout);
  std::pair<torch::Tensor, torch::Tensor> encode(const torch::Tensor& z_id);
  torch::Tensor decode(const torch::Tensor& x);
  // Reparameterized pass; `noise` is the standard-normal draw of shape
  // [N, latent].
  VaeOutput forward(const torch::Tensor& z_id, const torch::Tensor& noise);
  int latent_dim() const { return latent_; }
  int identity_dim() const { return d_id_; }
  torch::nn::Sequential& encoder_net() { return encoder_; }
  torch::nn::Sequential& decoder_net() { return decoder_; }

 private:
  int d_id_;
  int latent_;
  torch::nn::Sequential encoder_;
  torch::nn::Sequential decoder_;
};
TORCH_MODULE(IdentityVae);

// All networks of the disentanglement model. `c_id` is empty in siamese mode,
// where z_id itself is the identity embedding.
struct NetworkBundle {
  NetworkConfig config;
  Encoder encoder{nullptr};
  Decoder decoder{nullptr};
  Classifier c_med{nullptr};
  Classifier c_id{nullptr};
  Discriminator c_real{nullptr};

  // Encoder, decoder and the classifier heads.
  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;
  // Named modules in a fixed order (used for checkpoints and hashing).
  std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> modules() const;
  void train(bool on = true);
  void eval() { train(false); }
  void to(torch::Dtype dtype);
};

// Builds and initializes every network from `config` with a seeded generator.
// Throws ConfigError if the image size is not divisible by 2^stages.
NetworkBundle build_networks(const NetworkConfig& config);
IdentityVae build_identity_vae(const NetworkConfig& config);

// Contract-checked forward passes. Accept [C, H, W] or [N, C, H, W].
LatentTriple encode(Encoder& encoder, const NetworkConfig& config,
                    const torch::Tensor& images);
torch::Tensor decode(Decoder& decoder, const NetworkConfig& config,
                     const LatentTriple& triple);

// Mean squared difference over the last dimension; one value per row.
torch::Tensor siamese_distance(const torch::Tensor& a, const torch::Tensor& b);
double siamese_distance(const std::vector<double>& a, const std::vector<double>& b);

// Deep copies of all parameter and buffer values, and their restoration.
std::vector<torch::Tensor> snapshot(const torch::nn::Module& module);
void restore(torch::nn::Module& module, const std::vector<torch::Tensor>& values);

// FNV-1a over the raw bytes of every parameter, in registration order.
std::string parameter_hash(const torch::nn::Module& module);
std::string parameter_hash(const NetworkBundle& bundle);

}  // namespace disentangle

#endif  // DISENTANGLE_NETWORKS_H_
