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

#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "disentangle/errors.h"
#include "test_util.h"

namespace disentangle {
namespace {

using testutil::bitwise_equal;

TrainConfig tiny_train_config(IdentityMode mode = IdentityMode::kSiamese) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.network = testutil::tiny_config(mode);
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.learning_rate = 1e-3;
  cfg.vae_epochs = 2;
  cfg.vae_batch_size = 8;
  return cfg;
}

TripletBatch draw_batch(const std::vector<LabeledSample>& samples, IdentityMode mode,
                        std::mt19937_64& rng, int n = 4) {
  TripletSampler sampler(samples, mode);
  std::vector<TrainingTriplet> t;
  for (int i = 0; i < n; ++i) t.push_back(sampler.sample(rng));
  return make_batch(t);
}

// Augmentation

TEST(AugmentTest, ZeroProbabilitiesAreIdentity) {
  AugmentationConfig cfg;
  cfg.crop_probability = cfg.brightness_probability = cfg.flip_probability = 0.0;
  auto x = torch::rand({3, 1, 16, 16});
  std::mt19937_64 rng(1);
  EXPECT_TRUE(bitwise_equal(augment_generated(x, cfg, rng), x));
}

TEST(AugmentTest, ForcedFlipIsAnInvolution) {
  AugmentationConfig cfg;
  cfg.crop_probability = cfg.brightness_probability = 0.0;
  cfg.flip_probability = 1.0;
  auto x = torch::rand({2, 1, 8, 8});
  std::mt19937_64 rng(2);
  auto once = augment_generated(x, cfg, rng);
  EXPECT_FALSE(bitwise_equal(once, x));
  EXPECT_TRUE(bitwise_equal(augment_generated(once, cfg, rng), x));
}

TEST(AugmentTest, OutputClippedToUnitInterval) {
  AugmentationConfig cfg;
  cfg.brightness_delta = 0.5;
  cfg.brightness_probability = 1.0;
  cfg.crop_probability = 1.0;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    auto y = augment_generated(torch::rand({4, 1, 16, 16}), cfg, rng);
    EXPECT_GE(y.min().item<float>(), 0.0f);
    EXPECT_LE(y.max().item<float>(), 1.0f);
  }
}

TEST(AugmentTest, CarriesGradient) {
  auto x = torch::rand({2, 1, 16, 16}).requires_grad_(true);
  std::mt19937_64 rng(4);
  AugmentationConfig cfg;
  cfg.crop_probability = 1.0;
  augment_generated(x, cfg, rng).sum().backward();
  EXPECT_TRUE(x.grad().defined());
}

// Trainer step

TEST(TrainerTest, TwoStepsAreDeterministic) {
  torch::set_num_threads(1);
  auto data = testutil::tiny_dataset();
  auto run = [&] {
    auto cfg = tiny_train_config();
    torch::manual_seed(cfg.seed);
    auto bundle = build_networks(cfg.network);
    DisentanglerTrainer trainer(bundle, cfg);
    std::mt19937_64 rng(9);
    std::vector<std::string> lines;
    for (int s = 0; s < 2; ++s) {
      lines.push_back(trainer.step(draw_batch(data.train, cfg.mode, rng)).to_json(s).dump());
    }
    return lines;
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainerTest, BreakdownArithmeticHolds) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config(IdentityMode::kMulticlass);
  cfg.weights.lambda_r = 0.3;
  cfg.weights.lambda_d = 2.0;
  auto bundle = build_networks(cfg.network);
  DisentanglerTrainer trainer(bundle, cfg);
  std::mt19937_64 rng(10);
  auto b = trainer.step(draw_batch(data.train, cfg.mode, rng));
  EXPECT_NEAR(b.total, b.classification + 0.3 * b.realism + 2.0 * b.disentanglement, 1e-6);
  for (const char* key : {"adversarial", "ssim_term", "psnr_term", "medical", "identity",
                          "discriminator", "replaced_identity"}) {
    EXPECT_TRUE(b.subterms.count(key)) << key;
  }
}

TEST(TrainerTest, DiscriminatorUntouchedWithoutAdversarialTerm) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config();
  cfg.realism.adversarial = false;
  auto bundle = build_networks(cfg.network);
  const auto disc = parameter_hash(*bundle.c_real);
  const auto enc = parameter_hash(*bundle.encoder);
  DisentanglerTrainer trainer(bundle, cfg);
  std::mt19937_64 rng(11);
  trainer.step(draw_batch(data.train, cfg.mode, rng));
  EXPECT_EQ(parameter_hash(*bundle.c_real), disc);
  EXPECT_NE(parameter_hash(*bundle.encoder), enc);
}

TEST(TrainerTest, FrozenClassifiersStayFixed) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config(IdentityMode::kMulticlass);
  cfg.freeze_classifiers = true;
  auto bundle = build_networks(cfg.network);
  const auto med = parameter_hash(*bundle.c_med), id = parameter_hash(*bundle.c_id);
  DisentanglerTrainer trainer(bundle, cfg);
  std::mt19937_64 rng(12);
  trainer.step(draw_batch(data.train, cfg.mode, rng));
  EXPECT_EQ(parameter_hash(*bundle.c_med), med);
  EXPECT_EQ(parameter_hash(*bundle.c_id), id);
}

TEST(TrainerTest, NonFiniteLossThrowsBeforeAnyUpdate) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config();
  auto bundle = build_networks(cfg.network);
  {
    torch::NoGradGuard g;
    bundle.c_med->named_parameters()["fc2.bias"].fill_(std::numeric_limits<float>::quiet_NaN());
  }
  const auto enc = parameter_hash(*bundle.encoder), disc = parameter_hash(*bundle.c_real);
  DisentanglerTrainer trainer(bundle, cfg);
  std::mt19937_64 rng(13);
  try {
    trainer.step(draw_batch(data.train, cfg.mode, rng));
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("classification"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
  }
  EXPECT_EQ(parameter_hash(*bundle.encoder), enc);
  EXPECT_EQ(parameter_hash(*bundle.c_real), disc);
}

TEST(TrainerTest, PersistentNonFiniteLossAbortsTraining) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config();
  auto init = build_networks(network_config_for(data, cfg));
  {
    torch::NoGradGuard g;
    init.c_med->named_parameters()["fc2.bias"].fill_(std::numeric_limits<float>::quiet_NaN());
  }
  try {
    train_disentangler(data, cfg, init);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("3 consecutive"), std::string::npos) << e.what();
  }
}

// Gradient routing

TEST(GradientRoutingTest, ReplacementPassGivesEncoderNoGradientWhenLambdaDIsZero) {
  auto cfg = testutil::tiny_config();
  auto bundle = build_networks(cfg);
  auto ori = bundle.encoder->forward(torch::rand({3, 1, 16, 16}));
  auto tar = bundle.encoder->forward(torch::rand({3, 1, 16, 16}));
  auto rp = replacement_pass(bundle, ori, tar, LatentSlot::kIdentity);
  const double lambda_d = 0.0;
  auto loss = -torch::log(bundle.c_real->forward(rp.generated)).mean() +
              lambda_d * rp.disentanglement;
  loss.backward();
  for (const auto& p : bundle.encoder->parameters()) {
    if (p.grad().defined()) {
      EXPECT_EQ(p.grad().abs().max().item<float>(), 0.0f);
    }
  }
  double decoder_grad = 0;
  for (const auto& p : bundle.decoder->parameters()) {
    decoder_grad += p.grad().abs().sum().item<double>();
  }
  EXPECT_GT(decoder_grad, 0.0);
}

TEST(GradientRoutingTest, ClassificationAloneLeavesResidualRowsWithoutGradient) {
  for (auto mode : {IdentityMode::kSiamese, IdentityMode::kMulticlass}) {
    auto cfg = testutil::tiny_config(mode);
    auto bundle = build_networks(cfg);
    LossWeights w;
    w.lambda_r = 0;
    w.lambda_d = 0;
    auto ori = bundle.encoder->forward(torch::rand({4, 1, 16, 16}));
    auto tar = bundle.encoder->forward(torch::rand({4, 1, 16, 16}));
    auto same = bundle.encoder->forward(torch::rand({4, 1, 16, 16}));
    auto recon = bundle.decoder->forward(ori.concat());
    auto rp = replacement_pass(bundle, ori, tar, LatentSlot::kMedical);
    auto y = torch::tensor({0, 1, 0, 1});
    auto cls = mode == IdentityMode::kSiamese
                   ? classification_loss_siamese(bundle.c_med->forward(ori.z_med), ori.z_id,
                                                 same.z_id, tar.z_id, y, w)
                   : classification_loss_multiclass(bundle.c_med->forward(ori.z_med),
                                                    bundle.c_id->forward(ori.z_id), y,
                                                    torch::tensor({0, 1, 2, 0}), w);
    LossParts parts;
    parts.classification = cls.total;
    parts.realism = realism_loss_generator(bundle.c_real->forward(recon), torch::rand_like(recon),
                                           recon, MetricConfig{})
                        .total;
    parts.disentanglement = rp.disentanglement;
    total_loss(parts, w).value.backward();
    auto head = bundle.encoder->named_parameters()["head.weight"];
    const int64_t rest0 = cfg.d_id + cfg.d_med;
    EXPECT_EQ(head.grad().slice(0, rest0).abs().max().item<float>(), 0.0f);
    EXPECT_GT(head.grad().slice(0, 0, rest0).abs().max().item<float>(), 0.0f);
  }
}

// Full runs

TEST(TrainDisentanglerTest, ZeroEpochsReturnsInitialization) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config();
  cfg.epochs = 0;
  auto result = train_disentangler(data, cfg);
  EXPECT_EQ(parameter_hash(result.bundle),
            parameter_hash(build_networks(network_config_for(data, cfg))));
  EXPECT_TRUE(result.log.empty());
}

TEST(TrainDisentanglerTest, BestCheckpointDominatesLoggedValidations) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config();
  cfg.epochs = 3;
  auto dir = testutil::temp_dir("train");
  cfg.checkpoint_dir = (dir / "ckpt").string();
  cfg.log_path = (dir / "loss.jsonl").string();
  auto result = train_disentangler(data, cfg);
  ASSERT_EQ(result.validations.size(), 3u);
  double best = -1;
  for (const auto& v : result.validations) best = std::max(best, v.composite);
  EXPECT_DOUBLE_EQ(result.info.metric, best);
  for (const auto& v : result.validations) EXPECT_GE(result.info.metric, v.composite);

  std::ifstream log(cfg.log_path);
  std::string line;
  size_t lines = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("step") && j.contains("total") && j.contains("epoch"));
    ++lines;
  }
  EXPECT_EQ(lines, result.log.size());

  CheckpointInfo info;
  auto loaded = load_bundle(cfg.checkpoint_dir, &info);
  EXPECT_EQ(info.epoch, result.info.epoch);
  EXPECT_EQ(parameter_hash(loaded), parameter_hash(result.bundle));
  std::filesystem::remove_all(dir);
}

TEST(TrainDisentanglerTest, LogsAreBitwiseReproducible) {
  torch::set_num_threads(1);
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config();
  auto a = train_disentangler(data, cfg), b = train_disentangler(data, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].to_json(i).dump(), b.log[i].to_json(i).dump());
  }
  EXPECT_EQ(parameter_hash(a.bundle), parameter_hash(b.bundle));
}

// Identity VAE

TEST(IdentityVaeTrainingTest, FrozenNetworksAreBitwiseUnchanged) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config(IdentityMode::kMulticlass);
  auto bundle = build_networks(network_config_for(data, cfg));
  const auto hash = parameter_hash(bundle);
  auto flags = [&] {
    std::vector<bool> f;
    for (const auto& p : bundle.generator_parameters()) f.push_back(p.requires_grad());
    return f;
  };
  const auto before = flags();
  auto result = train_identity_vae(bundle, data, cfg);
  EXPECT_EQ(parameter_hash(bundle), hash);
  EXPECT_EQ(flags(), before);
  EXPECT_FALSE(result.log.empty());
}

TEST(IdentityVaeTrainingTest, DeterministicUnderSeed) {
  torch::set_num_threads(1);
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config();
  auto bundle = build_networks(network_config_for(data, cfg));
  auto a = train_identity_vae(bundle, data, cfg), b = train_identity_vae(bundle, data, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].to_json(), b.log[i].to_json());
  EXPECT_EQ(parameter_hash(*a.vae), parameter_hash(*b.vae));
}

TEST(IdentityVaeTrainingTest, DisabledPrivacyTermIsPlainVae) {
  auto data = testutil::tiny_dataset();
  for (auto mode : {IdentityMode::kSiamese, IdentityMode::kMulticlass}) {
    auto cfg = tiny_train_config(mode);
    cfg.vae_privacy_term = false;
    auto bundle = build_networks(network_config_for(data, cfg));
    auto r = train_identity_vae(bundle, data, cfg);
    for (const auto& s : r.log) {
      EXPECT_EQ(s.privacy, 0.0);
      EXPECT_NEAR(s.total, s.reconstruction + s.kl, 1e-6);
    }
  }
}

TEST(IdentityVaeTrainingTest, KlStaysBoundedAtConvergence) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config();
  cfg.vae_epochs = 30;
  auto bundle = build_networks(network_config_for(data, cfg));
  auto r = train_identity_vae(bundle, data, cfg);
  ASSERT_FALSE(r.log.empty());
  EXPECT_LT(r.log.back().kl, 5.0 * cfg.network.vae_latent);
  EXPECT_EQ(r.validation_losses.size(), 30u);
}

TEST(IdentityVaeTrainingTest, SavedCheckpointReloads) {
  auto data = testutil::tiny_dataset();
  auto cfg = tiny_train_config();
  auto bundle = build_networks(network_config_for(data, cfg));
  auto dir = testutil::temp_dir("vae_train");
  auto r = train_identity_vae(bundle, data, cfg, dir.string());
  auto loaded = load_vae(dir);
  EXPECT_EQ(parameter_hash(*loaded), parameter_hash(*r.vae));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace disentangle
