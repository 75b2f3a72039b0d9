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

#include "disentangle/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <ATen/CPUGeneratorImpl.h>

#include "disentangle/errors.h"
#include "disentangle/metrics.h"

namespace disentangle {
namespace {

constexpr int64_t kInferenceBatch = 128;

torch::Tensor labels_of(const std::vector<TrainingTriplet>& triplets,
                        const LabeledSample* TrainingTriplet::*member, bool identity) {
  std::vector<int64_t> v;
  v.reserve(triplets.size());
  for (const auto& t : triplets) {
    const LabeledSample* s = t.*member;
    v.push_back(identity ? s->identity : s->label);
  }
  return torch::tensor(v, torch::kInt64);
}

// Per-module deep copies of a bundle's parameters and buffers.
using BundleSnapshot = std::vector<std::vector<torch::Tensor>>;

BundleSnapshot snapshot_bundle(const NetworkBundle& b) {
  BundleSnapshot out;
  for (const auto& [name, m] : b.modules()) out.push_back(snapshot(*m));
  return out;
}

void restore_bundle(NetworkBundle& b, const BundleSnapshot& snap) {
  auto mods = b.modules();
  if (mods.size() != snap.size()) throw ContractError("snapshot does not match bundle layout");
  for (size_t i = 0; i < mods.size(); ++i) restore(*mods[i].second, snap[i]);
}

bool dominates(const ValidationRecord& a, const ValidationRecord& b) {
  return a.ssim >= b.ssim && a.identity_accuracy >= b.identity_accuracy &&
         a.disease_accuracy >= b.disease_accuracy;
}

// Fills in ValidationRecord::composite for every record.
void score_composites(std::vector<ValidationRecord>& records) {
  if (records.empty()) return;
  auto scaled = [&](double ValidationRecord::*field, const ValidationRecord& r) {
    double lo = records[0].*field, hi = lo;
    for (const auto& x : records) {
      lo = std::min(lo, x.*field);
      hi = std::max(hi, x.*field);
    }
    return hi > lo ? (r.*field - lo) / (hi - lo) : 0.0;
  };
  std::vector<double> c(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    c[i] = scaled(&ValidationRecord::ssim, records[i]) +
           scaled(&ValidationRecord::identity_accuracy, records[i]) +
           scaled(&ValidationRecord::disease_accuracy, records[i]);
  }
  for (size_t i = 0; i < records.size(); ++i) records[i].composite = c[i];
}

NetworkBundle clone_bundle(const NetworkBundle& src) {
  NetworkBundle out = build_networks(src.config);
  restore_bundle(out, snapshot_bundle(src));
  return out;
}

// Disables gradients of every bundle parameter for its lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(NetworkBundle& b) {
    for (const auto& [name, m] : b.modules()) {
      for (auto& p : m->parameters()) {
        params_.push_back(p);
        flags_.push_back(p.requires_grad());
        p.set_requires_grad(false);
      }
    }
  }
  ~FreezeGuard() {
    for (size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(flags_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<torch::Tensor> params_;
  std::vector<bool> flags_;
};

}  // namespace

torch::Tensor augment_generated(const torch::Tensor& images, const AugmentationConfig& cfg,
                                std::mt19937_64& rng) {
  if (images.dim() != 4) throw ContractError("augment_generated expects [N, C, H, W]");
  const int64_t n = images.size(0), h = images.size(2), w = images.size(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int64_t side_h = std::max<int64_t>(1, std::llround(cfg.crop_fraction * h));
  const int64_t side_w = std::max<int64_t>(1, std::llround(cfg.crop_fraction * w));
  std::vector<torch::Tensor> out;
  out.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    // All draws happen unconditionally so the stream does not depend on
    // which transforms fire.
    const bool crop = unit(rng) < cfg.crop_probability;
    const int64_t oy = std::uniform_int_distribution<int64_t>(0, h - side_h)(rng);
    const int64_t ox = std::uniform_int_distribution<int64_t>(0, w - side_w)(rng);
    const bool bright = unit(rng) < cfg.brightness_probability;
    const double delta = (2.0 * unit(rng) - 1.0) * cfg.brightness_delta;
    const bool flip = unit(rng) < cfg.flip_probability;

    auto x = images.slice(0, i, i + 1);
    if (crop && (side_h < h || side_w < w)) {
      x = x.slice(2, oy, oy + side_h).slice(3, ox, ox + side_w);
      x = torch::nn::functional::interpolate(
          x, torch::nn::functional::InterpolateFuncOptions()
                 .size(std::vector<int64_t>{h, w})
                 .mode(torch::kBilinear)
                 .align_corners(false));
    }
    if (bright) x = x + delta;
    if (flip) x = x.flip({3});
    out.push_back(x);
  }
  return torch::cat(out, 0).clamp(0.0, 1.0);
}

TripletBatch make_batch(const std::vector<TrainingTriplet>& triplets) {
  if (triplets.empty()) throw ContractError("empty triplet batch");
  TripletBatch b;
  std::vector<const LabeledSample*> ori, tar, same;
  for (const auto& t : triplets) {
    ori.push_back(t.original);
    tar.push_back(t.target);
    if (t.same_identity != nullptr) same.push_back(t.same_identity);
  }
  b.original = stack_images(ori);
  b.target = stack_images(tar);
  if (!same.empty()) {
    if (same.size() != ori.size()) throw ContractError("partial same-identity batch");
    b.same_identity = stack_images(same);
  }
  b.original_class = labels_of(triplets, &TrainingTriplet::original, false);
  b.original_identity = labels_of(triplets, &TrainingTriplet::original, true);
  b.target_class = labels_of(triplets, &TrainingTriplet::target, false);
  b.target_identity = labels_of(triplets, &TrainingTriplet::target, true);
  return b;
}

ReplacementPass replacement_pass(NetworkBundle& bundle, const LatentTriple& ori,
                                 const LatentTriple& tar, LatentSlot slot) {
  ReplacementPass r;
  r.slot = slot;
  const LatentTriple composed = replace_slot(ori.detach(), tar.detach(), slot);
  r.generated = bundle.decoder->forward(composed.concat());
  r.regenerated = bundle.encoder->forward(r.generated);
  r.disentanglement = disentanglement_loss(ori, tar, r.regenerated, slot);
  return r;
}

DisentanglerTrainer::DisentanglerTrainer(NetworkBundle& bundle, const TrainConfig& cfg)
    : bundle_(bundle), cfg_(cfg), rng_(cfg.seed * 0x9E3779B97F4A7C15ULL + 0x51) {
  std::vector<torch::Tensor> gen_params;
  if (cfg.freeze_classifiers) {
    for (auto* m : {static_cast<torch::nn::Module*>(bundle.encoder.get()),
                    static_cast<torch::nn::Module*>(bundle.decoder.get())}) {
      auto p = m->parameters();
      gen_params.insert(gen_params.end(), p.begin(), p.end());
    }
  } else {
    gen_params = bundle.generator_parameters();
  }
  auto opts = torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.beta1, cfg.beta2});
  generator_opt_ = std::make_unique<torch::optim::Adam>(gen_params, opts);
  discriminator_opt_ =
      std::make_unique<torch::optim::Adam>(bundle.discriminator_parameters(), opts);
}

LossBreakdown DisentanglerTrainer::step(const TripletBatch& batch) {
  const int64_t step_index = step_++;
  const auto& w = cfg_.weights;
  const bool siamese = cfg_.mode == IdentityMode::kSiamese;
  if (siamese && !batch.same_identity.defined()) {
    throw ContractError("siamese step needs same-identity images");
  }
  bundle_.train();

  const int64_t n = batch.original.size(0);
  std::vector<torch::Tensor> inputs{batch.original, batch.target};
  if (siamese) inputs.push_back(batch.same_identity);
  const LatentTriple all = bundle_.encoder->forward(torch::cat(inputs, 0));
  const LatentTriple t_ori = all.rows(0, n);
  const LatentTriple t_tar = all.rows(n, 2 * n);

  const torch::Tensor recon = bundle_.decoder->forward(t_ori.concat());
  const LatentSlot slot =
      std::bernoulli_distribution(0.5)(rng_) ? LatentSlot::kIdentity : LatentSlot::kMedical;
  const ReplacementPass rp = replacement_pass(bundle_, t_ori, t_tar, slot);

  ClassificationLoss cls;
  const auto med_out = bundle_.c_med->forward(t_ori.z_med);
  if (siamese) {
    const LatentTriple t_same = all.rows(2 * n, 3 * n);
    cls = classification_loss_siamese(med_out, t_ori.z_id, t_same.z_id, t_tar.z_id,
                                      batch.original_class, w);
  } else {
    cls = classification_loss_multiclass(med_out, bundle_.c_id->forward(t_ori.z_id),
                                         batch.original_class, batch.original_identity, w);
  }

  torch::Tensor disc_fake;
  if (cfg_.realism.adversarial) {
    auto fake = torch::cat({recon, rp.generated}, 0);
    if (cfg_.augment_discriminator) fake = augment_generated(fake, cfg_.augmentation, rng_);
    disc_fake = bundle_.c_real->forward(fake);
  }
  const RealismLoss real =
      realism_loss_generator(disc_fake, batch.original, recon, cfg_.metrics, cfg_.realism);

  LossParts parts;
  parts.classification = cls.total;
  parts.realism = real.total;
  parts.disentanglement = rp.disentanglement;
  parts.subterms = {{"adversarial", real.adversarial},
                    {"ssim_term", real.ssim_term},
                    {"psnr_term", real.psnr_term},
                    {"medical", cls.medical},
                    {"identity", cls.identity}};

  TotalLoss total;
  torch::Tensor disc_loss;
  try {
    total = total_loss(parts, w);
    if (cfg_.realism.adversarial) {
      auto real_in = batch.original;
      auto fake_in = torch::cat({recon, rp.generated}, 0).detach();
      if (cfg_.augment_discriminator) {
        real_in = augment_generated(real_in, cfg_.augmentation, rng_);
        fake_in = augment_generated(fake_in, cfg_.augmentation, rng_);
      }
      disc_loss = discriminator_loss(bundle_.c_real->forward(real_in),
                                     bundle_.c_real->forward(fake_in));
      if (!std::isfinite(disc_loss.item<double>())) {
        throw TrainingError("non-finite loss term 'discriminator'");
      }
    }
  } catch (const TrainingError& e) {
    throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step_index));
  }

  generator_opt_->zero_grad();
  total.value.backward();
  generator_opt_->step();
  if (disc_loss.defined()) {
    discriminator_opt_->zero_grad();
    disc_loss.backward();
    discriminator_opt_->step();
  }

  LossBreakdown out = total.breakdown;
  out.subterms["discriminator"] = disc_loss.defined() ? disc_loss.item<double>() : 0.0;
  out.subterms["replaced_identity"] = slot == LatentSlot::kIdentity ? 1.0 : 0.0;
  return out;
}

ValidationRecord validation_metrics(NetworkBundle& bundle, const std::vector<LabeledSample>& samples,
                                    const TrainConfig& cfg) {
  ValidationRecord r;
  if (samples.empty()) return r;
  torch::NoGradGuard no_grad;
  bundle.eval();
  const int64_t n = static_cast<int64_t>(samples.size());
  double ssim_sum = 0.0;
  int64_t disease_ok = 0, identity_ok = 0, identity_count = 0;
  std::vector<torch::Tensor> z_ids;
  for (int64_t b = 0; b < n; b += kInferenceBatch) {
    const int64_t e = std::min(n, b + kInferenceBatch);
    std::vector<const LabeledSample*> chunk;
    for (int64_t i = b; i < e; ++i) chunk.push_back(&samples[i]);
    const auto x = stack_images(chunk);
    const auto t = bundle.encoder->forward(x);
    const auto recon = bundle.decoder->forward(t.concat());
    ssim_sum += ssim(x, recon, cfg.metrics).sum().item<double>();
    const auto med = bundle.c_med->forward(t.z_med).argmax(1);
    const auto idp = bundle.c_id ? bundle.c_id->forward(t.z_id).argmax(1) : torch::Tensor();
    for (int64_t i = b; i < e; ++i) {
      if (med[i - b].item<int64_t>() == samples[i].label) ++disease_ok;
      if (idp.defined()) {
        ++identity_count;
        if (idp[i - b].item<int64_t>() == samples[i].identity) ++identity_ok;
      }
    }
    z_ids.push_back(t.z_id);
  }
  if (!bundle.c_id) {
    const auto z = torch::cat(z_ids, 0);
    const double t = cfg.weights.threshold_t;
    for (int64_t i = 0; i < n; ++i) {
      int64_t pos = -1, neg = -1;
      for (int64_t k = 1; k < n && (pos < 0 || neg < 0); ++k) {
        const int64_t j = (i + k) % n;
        if (samples[j].identity == samples[i].identity) {
          if (pos < 0) pos = j;
        } else if (neg < 0) {
          neg = j;
        }
      }
      if (pos >= 0) {
        ++identity_count;
        if (siamese_distance(z[i], z[pos]).item<double>() < t) ++identity_ok;
      }
      if (neg >= 0) {
        ++identity_count;
        if (!(siamese_distance(z[i], z[neg]).item<double>() < t)) ++identity_ok;
      }
    }
  }
  r.ssim = ssim_sum / static_cast<double>(n);
  r.disease_accuracy = static_cast<double>(disease_ok) / static_cast<double>(n);
  r.identity_accuracy =
      identity_count > 0 ? static_cast<double>(identity_ok) / static_cast<double>(identity_count)
                         : 0.0;
  return r;
}

NetworkConfig network_config_for(const DatasetSplit& data, const TrainConfig& cfg) {
  NetworkConfig nc = cfg.network;
  nc.image_size = data.image_size;
  nc.channels = data.channels;
  nc.num_identities = data.num_identities;
  nc.num_classes = data.num_classes;
  nc.mode = cfg.mode;
  nc.seed = cfg.seed;
  nc.validate();
  return nc;
}

TrainResult train_disentangler(const DatasetSplit& data, const TrainConfig& cfg,
                               std::optional<NetworkBundle> init) {
  cfg.validate();
  const NetworkConfig nc = network_config_for(data, cfg);
  NetworkBundle bundle;
  if (init) {
    const auto& ic = init->config;
    if (ic.image_size != nc.image_size || ic.channels != nc.channels ||
        ic.latent_dim() != nc.latent_dim() || ic.mode != nc.mode) {
      throw ConfigError("initial checkpoint does not match the dataset or configuration");
    }
    bundle = clone_bundle(*init);
  } else {
    bundle = build_networks(nc);
  }
  torch::manual_seed(cfg.seed);

  TrainResult result;
  result.info.kind = "disentangler";
  result.info.config_hash = cfg.hash();
  result.info.config = cfg.to_json();

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path);
    if (!log) throw Error("io", "cannot open loss log " + cfg.log_path);
  }

  auto finish = [&](NetworkBundle& b) {
    b.eval();
    result.bundle = b;
    if (!cfg.checkpoint_dir.empty()) save_bundle(b, cfg.checkpoint_dir, result.info);
    result.info.parameter_hash = parameter_hash(b);
    return result;
  };
  if (cfg.epochs == 0) return finish(bundle);

  TripletSampler sampler(data.train, cfg.mode);
  if (sampler.eligible_originals().empty()) {
    throw SamplingError("no training sample can serve as a triplet original");
  }
  DisentanglerTrainer trainer(bundle, cfg);

  struct Candidate {
    size_t record;
    BundleSnapshot snap;
  };
  std::vector<Candidate> front;
  int bad_steps = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order = sampler.eligible_originals();
    std::shuffle(order.begin(), order.end(), trainer.rng());
    for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<TrainingTriplet> triplets;
      for (size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) {
        triplets.push_back(sampler.sample_for(order[i], trainer.rng()));
      }
      try {
        const LossBreakdown bd = trainer.step(make_batch(triplets));
        bad_steps = 0;
        if (log) {
          auto j = bd.to_json(trainer.steps() - 1);
          j["epoch"] = epoch;
          log << j.dump() << '\n';
        }
        result.log.push_back(bd);
      } catch (const TrainingError& e) {
        if (++bad_steps >= 3) {
          throw TrainingError(std::string("aborting after 3 consecutive non-finite steps; last: ") +
                              e.what());
        }
      }
    }
    if (log) log.flush();

    const bool validate_now =
        !data.validation.empty() && (epoch % cfg.validation_every == 0 || epoch == cfg.epochs);
    if (!validate_now) continue;
    ValidationRecord rec = validation_metrics(bundle, data.validation, cfg);
    rec.epoch = epoch;
    result.validations.push_back(rec);
    // Only records on the Pareto front can win under any monotone rescaling.
    bool dominated = false;
    for (const auto& c : front) dominated |= dominates(result.validations[c.record], rec);
    if (dominated) continue;
    std::erase_if(front, [&](const Candidate& c) {
      return dominates(rec, result.validations[c.record]);
    });
    front.push_back({result.validations.size() - 1, snapshot_bundle(bundle)});
  }

  score_composites(result.validations);
  if (front.empty()) {
    result.info.epoch = cfg.epochs;
    return finish(bundle);
  }
  const Candidate* best = &front[0];
  for (const auto& c : front) {
    const auto& r = result.validations[c.record];
    const auto& cur = result.validations[best->record];
    if (r.composite > cur.composite || (r.composite == cur.composite && r.epoch > cur.epoch)) {
      best = &c;
    }
  }
  restore_bundle(bundle, best->snap);
  result.info.epoch = result.validations[best->record].epoch;
  result.info.metric = result.validations[best->record].composite;
  return finish(bundle);
}

nlohmann::json PrivacyBreakdown::to_json() const {
  return {{"step", step},
          {"reconstruction", reconstruction},
          {"kl", kl},
          {"privacy", privacy},
          {"total", total}};
}

torch::Tensor identity_features(NetworkBundle& bundle, const std::vector<LabeledSample>& samples) {
  torch::NoGradGuard no_grad;
  bundle.eval();
  std::vector<torch::Tensor> out;
  const int64_t n = static_cast<int64_t>(samples.size());
  for (int64_t b = 0; b < n; b += kInferenceBatch) {
    std::vector<const LabeledSample*> chunk;
    for (int64_t i = b; i < std::min(n, b + kInferenceBatch); ++i) chunk.push_back(&samples[i]);
    out.push_back(bundle.encoder->forward(stack_images(chunk)).z_id);
  }
  if (out.empty()) return torch::zeros({0, bundle.config.d_id});
  return torch::cat(out, 0);
}

namespace {

PrivacyLoss vae_objective(NetworkBundle& bundle, IdentityVae& vae, const TrainConfig& cfg,
                          const torch::Tensor& z, const torch::Tensor& z_other,
                          const torch::Tensor& noise, const torch::Tensor& prior) {
  const VaeOutput out = vae->forward(z, noise);
  const torch::Tensor z_s = vae->decode(prior);
  if (cfg.mode == IdentityMode::kMulticlass) {
    return privacy_loss_multiclass(z, out.reconstruction, out.mu, out.logvar,
                                   bundle.c_id->forward(z_s), cfg.vae_privacy_term);
  }
  return privacy_loss_siamese(z, z_other, out.reconstruction, out.mu, out.logvar, z_s,
                              cfg.weights, cfg.vae_privacy_term);
}

// For every index, the index of a sample with another identity: uniform
// when `rng` is given, else the next such sample in cyclic order.
std::vector<int64_t> other_patients(const std::vector<LabeledSample>& samples,
                                    std::mt19937_64* rng) {
  const int64_t n = static_cast<int64_t>(samples.size());
  std::vector<int64_t> out(n, -1);
  for (int64_t i = 0; i < n; ++i) {
    if (rng != nullptr) {
      std::uniform_int_distribution<int64_t> pick(0, n - 1);
      for (int tries = 0; tries < 64 && out[i] < 0; ++tries) {
        const int64_t j = pick(*rng);
        if (samples[j].identity != samples[i].identity) out[i] = j;
      }
    }
    for (int64_t k = 1; k < n && out[i] < 0; ++k) {
      const int64_t j = (i + k) % n;
      if (samples[j].identity != samples[i].identity) out[i] = j;
    }
    if (out[i] < 0) throw SamplingError("identity VAE training needs at least two identities");
  }
  return out;
}

}  // namespace

VaeResult train_identity_vae(NetworkBundle& bundle, const DatasetSplit& data,
                             const TrainConfig& cfg, const std::string& checkpoint_dir) {
  cfg.validate();
  if (data.train.empty()) throw SamplingError("identity VAE training set is empty");
  if (cfg.mode == IdentityMode::kMulticlass && !bundle.c_id) {
    throw ContractError("multiclass identity VAE needs the identity classifier");
  }
  if (cfg.vae_epochs < 0 || cfg.vae_batch_size <= 0) {
    throw ConfigError("vae_epochs must be >= 0 and vae_batch_size > 0");
  }
  FreezeGuard freeze(bundle);
  bundle.eval();
  const auto z_train = identity_features(bundle, data.train);
  const auto& val_samples = data.validation.empty() ? data.train : data.validation;
  const auto z_val = identity_features(bundle, val_samples);

  torch::manual_seed(cfg.seed ^ 0x7ae);
  VaeResult result;
  result.vae = build_identity_vae(bundle.config);
  IdentityVae& vae = result.vae;
  const int64_t latent = vae->latent_dim();
  torch::optim::Adam opt(vae->parameters(),
                         torch::optim::AdamOptions(cfg.vae_learning_rate)
                             .betas({cfg.beta1, cfg.beta2}));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(cfg.seed + 17);
  std::mt19937_64 rng(cfg.seed * 0x2545F4914F6CDD1DULL + 3);

  const std::vector<int64_t> val_other = other_patients(val_samples, nullptr);
  const auto z_val_other = z_val.index_select(0, torch::tensor(val_other, torch::kInt64));

  auto validation_loss = [&]() {
    torch::NoGradGuard no_grad;
    vae->eval();
    auto vgen = at::make_generator<at::CPUGeneratorImpl>(cfg.seed + 29);
    const int64_t m = z_val.size(0);
    const auto noise = torch::randn({m, latent}, vgen);
    const auto prior = torch::randn({m, latent}, vgen);
    return vae_objective(bundle, vae, cfg, z_val, z_val_other, noise, prior).total.item<double>();
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<torch::Tensor> best_snap = snapshot(*vae);
  int best_epoch = 0;
  const int64_t n = z_train.size(0);
  int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.vae_epochs; ++epoch) {
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<int64_t> others = other_patients(data.train, &rng);
    vae->train();
    for (int64_t b = 0; b < n; b += cfg.vae_batch_size) {
      const int64_t e = std::min(n, b + static_cast<int64_t>(cfg.vae_batch_size));
      std::vector<int64_t> idx(order.begin() + b, order.begin() + e), oth;
      for (int64_t i : idx) oth.push_back(others[i]);
      const auto z = z_train.index_select(0, torch::tensor(idx, torch::kInt64));
      const auto z_other = z_train.index_select(0, torch::tensor(oth, torch::kInt64));
      const auto noise = torch::randn({e - b, latent}, gen);
      const auto prior = torch::randn({e - b, latent}, gen);
      const PrivacyLoss loss = vae_objective(bundle, vae, cfg, z, z_other, noise, prior);
      const double total = loss.total.item<double>();
      if (!std::isfinite(total)) {
        throw TrainingError("non-finite identity VAE loss at step " + std::to_string(step));
      }
      opt.zero_grad();
      loss.total.backward();
      opt.step();
      PrivacyBreakdown pb;
      pb.step = step++;
      pb.reconstruction = loss.reconstruction.item<double>();
      pb.kl = loss.kl.item<double>();
      pb.privacy = loss.privacy.item<double>();
      pb.total = total;
      result.log.push_back(pb);
    }
    const double v = validation_loss();
    result.validation_losses.push_back(v);
    if (v < best) {
      best = v;
      best_epoch = epoch;
      best_snap = snapshot(*vae);
    }
  }
  restore(*vae, best_snap);
  vae->eval();

  result.info.kind = "identity_vae";
  result.info.config_hash = cfg.hash();
  result.info.config = cfg.to_json();
  result.info.epoch = best_epoch;
  result.info.metric = std::isfinite(best) ? best : 0.0;
  if (!checkpoint_dir.empty()) save_vae(vae, bundle.config, checkpoint_dir, result.info);
  result.info.parameter_hash = parameter_hash(*vae);
  return result;
}

}  // namespace disentangle
