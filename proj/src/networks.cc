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

#include "disentangle/networks.h"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "disentangle/errors.h"

namespace disentangle {
namespace {

namespace F = torch::nn::functional;

torch::nn::Conv2d conv3x3(int in, int out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
}

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

void init_module(torch::nn::Module& module, const std::string& scheme,
                 at::Generator& gen) {
  for (auto& p : module.named_parameters(/*recurse=*/true)) {
    torch::NoGradGuard no_grad;
    auto& t = p.value();
    if (t.dim() < 2) {
      t.zero_();
      continue;
    }
    const int64_t receptive = t[0][0].numel();
    const double fan_in = static_cast<double>(t.size(1) * receptive);
    const double fan_out = static_cast<double>(t.size(0) * receptive);
    double bound = 0.0;
    if (scheme == "he_uniform") {
      bound = std::sqrt(6.0 / fan_in);
    } else if (scheme == "xavier_uniform") {
      bound = std::sqrt(6.0 / (fan_in + fan_out));
    } else {
      throw ConfigError("unknown init scheme '" + scheme +
                        "' (expected he_uniform or xavier_uniform)");
    }
    t.uniform_(-bound, bound, gen);
    // Residual branches start at zero, so each block begins as its skip path.
    if (p.key() == "conv2.weight" || p.key().ends_with(".conv2.weight")) t.zero_();
  }
}

}  // namespace

void NetworkConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(image_size, "image_size");
  positive(d_id, "d_id");
  positive(d_med, "d_med");
  positive(d_rest, "d_rest");
  positive(stages, "stages");
  positive(base_width, "base_width");
  positive(hidden, "hidden");
  positive(vae_latent, "vae_latent");
  positive(vae_hidden, "vae_hidden");
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (mode == IdentityMode::kMulticlass && num_identities < 2) {
    throw ConfigError("multiclass identity head needs num_identities >= 2");
  }
  if (stages > 16 || image_size % (1 << stages) != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " is not divisible by 2^stages = 2^" + std::to_string(stages));
  }
}

int NetworkConfig::width(int s) const { return base_width << std::min(s, 2); }

nlohmann::json NetworkConfig::to_json() const {
  return {{"image_size", image_size}, {"channels", channels},
          {"d_id", d_id},             {"d_med", d_med},
          {"d_rest", d_rest},         {"stages", stages},
          {"base_width", base_width}, {"hidden", hidden},
          {"dropout", dropout},       {"num_identities", num_identities},
          {"num_classes", num_classes}, {"mode", to_string(mode)},
          {"vae_latent", vae_latent}, {"vae_hidden", vae_hidden},
          {"seed", seed},             {"init", init}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.image_size = j.at("image_size");
  c.channels = j.at("channels");
  c.d_id = j.at("d_id");
  c.d_med = j.at("d_med");
  c.d_rest = j.at("d_rest");
  c.stages = j.at("stages");
  c.base_width = j.at("base_width");
  c.hidden = j.at("hidden");
  c.dropout = j.at("dropout");
  c.num_identities = j.at("num_identities");
  c.num_classes = j.at("num_classes");
  c.mode = identity_mode_from_string(j.at("mode"));
  c.vae_latent = j.at("vae_latent");
  c.vae_hidden = j.at("vae_hidden");
  c.seed = j.at("seed");
  c.init = j.at("init");
  return c;
}

std::string to_string(LatentSlot slot) {
  switch (slot) {
    case LatentSlot::kIdentity: return "identity";
    case LatentSlot::kMedical: return "medical";
    case LatentSlot::kRest: return "rest";
  }
  return "?";
}

torch::Tensor LatentTriple::concat() const { return torch::cat({z_id, z_med, z_rest}, 1); }

LatentTriple LatentTriple::split(const torch::Tensor& projection, int d_id, int d_med,
                                 int d_rest) {
  if (projection.dim() != 2 || projection.size(1) != d_id + d_med + d_rest) {
    throw ContractError("latent projection has shape " + shape_string(projection) +
                        ", expected [N, " + std::to_string(d_id + d_med + d_rest) + "]");
  }
  return {projection.narrow(1, 0, d_id), projection.narrow(1, d_id, d_med),
          projection.narrow(1, d_id + d_med, d_rest)};
}

const torch::Tensor& LatentTriple::slot(LatentSlot s) const {
  return s == LatentSlot::kIdentity ? z_id : s == LatentSlot::kMedical ? z_med : z_rest;
}

torch::Tensor& LatentTriple::slot(LatentSlot s) {
  return s == LatentSlot::kIdentity ? z_id : s == LatentSlot::kMedical ? z_med : z_rest;
}

LatentTriple LatentTriple::detach() const {
  return {z_id.detach(), z_med.detach(), z_rest.detach()};
}

LatentTriple LatentTriple::rows(int64_t begin, int64_t end) const {
  return {z_id.slice(0, begin, end), z_med.slice(0, begin, end),
          z_rest.slice(0, begin, end)};
}

LatentTriple replace_slot(const LatentTriple& base, const LatentTriple& donor,
                          LatentSlot slot) {
  LatentTriple out = base;
  out.slot(slot) = donor.slot(slot);
  return out;
}

ResidualBlockImpl::ResidualBlockImpl(int in_channels, int out_channels, Resample resample)
    : resample_(resample) {
  conv1_ = register_module("conv1", conv3x3(in_channels, out_channels));
  conv2_ = register_module("conv2", conv3x3(out_channels, out_channels));
  if (in_channels != out_channels) {
    skip_ = register_module(
        "skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1)));
  }
}

torch::Tensor ResidualBlockImpl::resample(const torch::Tensor& x) const {
  switch (resample_) {
    case Resample::kDown: return F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
    case Resample::kUp:
      return F::interpolate(x, F::InterpolateFuncOptions()
                                   .scale_factor(std::vector<double>{2.0, 2.0})
                                   .mode(torch::kNearest));
    case Resample::kNone: break;
  }
  return x;
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto r = resample(x);
  auto h = conv2_(torch::silu(conv1_(torch::silu(r))));
  auto skip = skip_ ? skip_(r) : r;
  return skip + h;
}

EncoderImpl::EncoderImpl(const NetworkConfig& config) : config_(config) {
  stem_ = register_module("stem", conv3x3(config.channels, config.width(0)));
  for (int s = 0; s < config.stages; ++s) {
    blocks_->push_back(ResidualBlock(config.width(s), config.width(s + 1), Resample::kDown));
  }
  blocks_ = register_module("blocks", blocks_);
  const int b = config.bottleneck_size();
  head_ = register_module(
      "head", torch::nn::Linear(config.width(config.stages) * b * b, config.latent_dim()));
}

torch::Tensor EncoderImpl::project(const torch::Tensor& images) {
  auto h = blocks_->forward(stem_(images));
  return head_(torch::silu(h).flatten(1));
}

LatentTriple EncoderImpl::forward(const torch::Tensor& images) {
  return LatentTriple::split(project(images), config_.d_id, config_.d_med, config_.d_rest);
}

DecoderImpl::DecoderImpl(const NetworkConfig& config) : config_(config) {
  const int b = config.bottleneck_size();
  head_ = register_module(
      "head", torch::nn::Linear(config.latent_dim(), config.width(config.stages) * b * b));
  for (int s = config.stages; s > 0; --s) {
    blocks_->push_back(ResidualBlock(config.width(s), config.width(s - 1), Resample::kUp));
  }
  blocks_ = register_module("blocks", blocks_);
  out_ = register_module("out", conv3x3(config.width(0), config.channels));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& latent) {
  const int b = config_.bottleneck_size();
  auto h = head_(latent).view({-1, config_.width(config_.stages), b, b});
  h = blocks_->forward(h);
  return torch::sigmoid(out_(torch::silu(h)));
}

ClassifierImpl::ClassifierImpl(int in_features, int hidden, int classes, double dropout)
    : in_features_(in_features), classes_(classes) {
  fc1_ = register_module("fc1", torch::nn::Linear(in_features, hidden));
  dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden, classes));
}

torch::Tensor ClassifierImpl::logits(const torch::Tensor& x) {
  return fc2_(dropout_(torch::silu(fc1_(x))));
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& x) {
  return torch::softmax(logits(x), -1);
}

DiscriminatorImpl::DiscriminatorImpl(const NetworkConfig& config) {
  stem_ = register_module("stem", conv3x3(config.channels, config.width(0)));
  for (int s = 0; s < config.stages; ++s) {
    blocks_->push_back(ResidualBlock(config.width(s), config.width(s + 1), Resample::kDown));
  }
  blocks_ = register_module("blocks", blocks_);
  const int b = config.bottleneck_size();
  head_ = register_module("head", torch::nn::Linear(config.width(config.stages) * b * b, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) {
  auto logit = head_(torch::silu(blocks_->forward(stem_(images))).flatten(1)).squeeze(1);
  return kProbabilityFloor + (1.0 - 2.0 * kProbabilityFloor) * torch::sigmoid(logit);
}

IdentityVaeImpl::IdentityVaeImpl(int d_id, int hidden, int latent, double dropout)
    : d_id_(d_id), latent_(latent) {
  encoder_->push_back(torch::nn::Linear(d_id, hidden));
  encoder_->push_back(torch::nn::SiLU());
  encoder_->push_back(torch::nn::Dropout(dropout));
  encoder_->push_back(torch::nn::Linear(hidden, 2 * latent));
  decoder_->push_back(torch::nn::Linear(latent, hidden));
  decoder_->push_back(torch::nn::SiLU());
  decoder_->push_back(torch::nn::Dropout(dropout));
  decoder_->push_back(torch::nn::Linear(hidden, d_id));
  encoder_ = register_module("encoder", encoder_);
  decoder_ = register_module("decoder", decoder_);
}

std::pair<torch::Tensor, torch::Tensor> IdentityVaeImpl::encode(const torch::Tensor& z_id) {
  if (z_id.dim() != 2 || z_id.size(1) != d_id_) {
    throw ContractError("VAE input has shape " + shape_string(z_id) + ", expected [N, " +
                        std::to_string(d_id_) + "]");
  }
  auto h = encoder_->forward(z_id);
  return {h.narrow(1, 0, latent_), h.narrow(1, latent_, latent_)};
}

torch::Tensor IdentityVaeImpl::decode(const torch::Tensor& x) {
  if (x.dim() != 2 || x.size(1) != latent_) {
    throw ContractError("VAE noise has shape " + shape_string(x) + ", expected [N, " +
                        std::to_string(latent_) + "]");
  }
  return decoder_->forward(x);
}

VaeOutput IdentityVaeImpl::forward(const torch::Tensor& z_id, const torch::Tensor& noise) {
  auto [mu, logvar] = encode(z_id);
  auto z = mu + torch::exp(0.5 * logvar) * noise;
  return {decode(z), mu, logvar};
}

std::vector<torch::Tensor> NetworkBundle::generator_parameters() const {
  std::vector<torch::Tensor> out;
  for (auto* m : std::initializer_list<const torch::nn::Module*>{
           encoder.get(), decoder.get(), c_med.get(), c_id ? c_id.get() : nullptr}) {
    if (m == nullptr) continue;
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<torch::Tensor> NetworkBundle::discriminator_parameters() const {
  return c_real->parameters();
}

std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>>
NetworkBundle::modules() const {
  std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> out = {
      {"encoder", encoder.ptr()}, {"decoder", decoder.ptr()}, {"c_med", c_med.ptr()}};
  if (c_id) out.emplace_back("c_id", c_id.ptr());
  out.emplace_back("c_real", c_real.ptr());
  return out;
}

void NetworkBundle::train(bool on) {
  for (auto& [name, m] : modules()) m->train(on);
}

void NetworkBundle::to(torch::Dtype dtype) {
  for (auto& [name, m] : modules()) m->to(dtype);
}

NetworkBundle build_networks(const NetworkConfig& config) {
  config.validate();
  NetworkBundle b;
  b.config = config;
  b.encoder = Encoder(config);
  b.decoder = Decoder(config);
  b.c_med = Classifier(config.d_med, config.hidden, config.num_classes, config.dropout);
  if (config.mode == IdentityMode::kMulticlass) {
    b.c_id = Classifier(config.d_id, config.hidden, config.num_identities, config.dropout);
  }
  b.c_real = Discriminator(config);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed);
  for (auto& [name, m] : b.modules()) init_module(*m, config.init, gen);
  return b;
}

IdentityVae build_identity_vae(const NetworkConfig& config) {
  config.validate();
  IdentityVae vae(config.d_id, config.vae_hidden, config.vae_latent, config.dropout);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed ^ 0x7ae5eedULL);
  init_module(*vae, config.init, gen);
  return vae;
}

LatentTriple encode(Encoder& encoder, const NetworkConfig& config,
                    const torch::Tensor& images) {
  torch::Tensor x = images.dim() == 3 ? images.unsqueeze(0) : images;
  if (x.dim() != 4 || x.size(1) != config.channels || x.size(2) != config.image_size ||
      x.size(3) != config.image_size) {
    throw ContractError("encoder input has shape " + shape_string(images) + ", expected [N, " +
                        std::to_string(config.channels) + ", " +
                        std::to_string(config.image_size) + ", " +
                        std::to_string(config.image_size) + "]");
  }
  return encoder(x);
}

torch::Tensor decode(Decoder& decoder, const NetworkConfig& config, const LatentTriple& t) {
  auto check = [](const torch::Tensor& z, int d, const char* name) {
    if (!z.defined() || z.dim() != 2 || z.size(1) != d) {
      throw ContractError(std::string("decoder slot ") + name + " has shape " +
                          (z.defined() ? shape_string(z) : "undefined") + ", expected [N, " +
                          std::to_string(d) + "]");
    }
  };
  check(t.z_id, config.d_id, "z_id");
  check(t.z_med, config.d_med, "z_med");
  check(t.z_rest, config.d_rest, "z_rest");
  if (t.z_med.size(0) != t.z_id.size(0) || t.z_rest.size(0) != t.z_id.size(0)) {
    throw ContractError("decoder slots disagree on batch size");
  }
  return decoder(t.concat());
}

torch::Tensor siamese_distance(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) {
    throw ContractError("siamese_distance shape mismatch: " + shape_string(a) + " vs " +
                        shape_string(b));
  }
  return (a - b).pow(2).mean(-1);
}

double siamese_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ContractError("siamese_distance needs equal, nonzero dimensions");
  }
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

std::vector<torch::Tensor> snapshot(const torch::nn::Module& module) {
  std::vector<torch::Tensor> out;
  for (const auto& p : module.parameters()) out.push_back(p.detach().clone());
  for (const auto& b : module.buffers()) out.push_back(b.detach().clone());
  return out;
}

void restore(torch::nn::Module& module, const std::vector<torch::Tensor>& values) {
  torch::NoGradGuard no_grad;
  auto params = module.parameters();
  auto buffers = module.buffers();
  if (values.size() != params.size() + buffers.size()) {
    throw ContractError("snapshot does not match module layout");
  }
  size_t i = 0;
  for (auto& p : params) p.copy_(values[i++]);
  for (auto& b : buffers) b.copy_(values[i++]);
}

std::string parameter_hash(const torch::nn::Module& module) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : module.parameters()) {
    auto c = p.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const size_t n = c.numel() * c.element_size();
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string parameter_hash(const NetworkBundle& bundle) {
  std::string joined;
  for (const auto& [name, m] : bundle.modules()) joined += parameter_hash(*m);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : joined) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace disentangle
