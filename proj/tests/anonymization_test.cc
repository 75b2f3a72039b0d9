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

#include "disentangle/anonymization.h"

#include <set>

#include <gtest/gtest.h>

#include "disentangle/errors.h"
#include "test_util.h"

namespace disentangle {
namespace {

using testutil::bitwise_equal;

class AnonymizationTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg_ = testutil::tiny_config();
    bundle_ = build_networks(cfg_);
    bundle_.eval();
    vae_ = build_identity_vae(cfg_);
    vae_->eval();
    torch::manual_seed(3);
    images_ = torch::rand({5, 1, 16, 16});
  }

  NetworkConfig cfg_;
  NetworkBundle bundle_;
  IdentityVae vae_{nullptr};
  torch::Tensor images_;
};

TEST_F(AnonymizationTest, MedicalAndResidualSlotsAreBitwiseOriginal) {
  auto r = anonymize(bundle_, vae_, images_, 11);
  torch::NoGradGuard g;
  auto enc = bundle_.encoder->forward(images_);
  EXPECT_TRUE(bitwise_equal(r.decoder_input.narrow(1, cfg_.d_id, cfg_.d_med), enc.z_med));
  EXPECT_TRUE(bitwise_equal(r.decoder_input.narrow(1, cfg_.d_id + cfg_.d_med, cfg_.d_rest),
                            enc.z_rest));
  EXPECT_TRUE(bitwise_equal(r.decoder_input.narrow(1, 0, cfg_.d_id), r.synthetic_z_id));
  EXPECT_TRUE(bitwise_equal(r.image, bundle_.decoder->forward(r.decoder_input)));
  EXPECT_GE(r.image.min().item<float>(), 0.0f);
  EXPECT_LE(r.image.max().item<float>(), 1.0f);
}

TEST_F(AnonymizationTest, PureFunctionOfSeed) {
  auto a = anonymize(bundle_, vae_, images_, 21), b = anonymize(bundle_, vae_, images_, 21);
  EXPECT_TRUE(bitwise_equal(a.image, b.image));
  auto c = anonymize(bundle_, vae_, images_, 22);
  EXPECT_GT((a.synthetic_z_id - c.synthetic_z_id).norm().item<double>(), 0.0);
}

TEST_F(AnonymizationTest, SingleImageIsAccepted) {
  auto r = anonymize(bundle_, vae_, images_[0], 4);
  EXPECT_EQ(r.image.sizes(), (std::vector<int64_t>{1, 1, 16, 16}));
  EXPECT_EQ(r.synthetic_z_id.size(1), cfg_.d_id);
  EXPECT_EQ(r.seed, 4u);
}

TEST_F(AnonymizationTest, VaeWidthMismatchIsContractError) {
  auto other = cfg_;
  other.d_id = cfg_.d_id + 2;
  auto vae = build_identity_vae(other);
  EXPECT_THROW(anonymize(bundle_, vae, images_, 1), ContractError);
}

TEST_F(AnonymizationTest, SyntheticSamplerShapesAndDeterminism) {
  EXPECT_EQ(sample_synthetic_identity(vae_, 1, 0).size(0), 0);
  auto a = sample_synthetic_identity(vae_, 5, 7), b = sample_synthetic_identity(vae_, 5, 7);
  EXPECT_EQ(a.sizes(), (std::vector<int64_t>{7, cfg_.d_id}));
  EXPECT_TRUE(bitwise_equal(a, b));
}

TEST_F(AnonymizationTest, SyntheticSamplesStayFinite) {
  auto z = sample_synthetic_identity(vae_, 9, 10000);
  EXPECT_TRUE(torch::isfinite(z.mean(0)).all().item<bool>());
}

TEST_F(AnonymizationTest, AverageOfTwoPointsIsMidpoint) {
  auto donors = torch::rand({2, 1, 16, 16});
  auto r = average_identities(bundle_, images_, donors);
  torch::NoGradGuard g;
  auto z = bundle_.encoder->forward(donors).z_id;
  auto mean = (z[0] + z[1]) / 2;
  for (int64_t i = 0; i < images_.size(0); ++i) {
    EXPECT_TRUE(torch::allclose(r.synthetic_z_id[i], mean, 1e-6, 1e-7));
  }
  auto enc = bundle_.encoder->forward(images_);
  EXPECT_TRUE(bitwise_equal(r.decoder_input.narrow(1, cfg_.d_id, cfg_.d_med), enc.z_med));
  EXPECT_EQ(r.method, AnonymizationMethod::kAverage);
}

TEST_F(AnonymizationTest, DuplicatedDonorsGiveThatDonor) {
  auto one = torch::rand({1, 1, 16, 16});
  auto r = average_identities(bundle_, images_[0], one.expand({3, 1, 16, 16}));
  torch::NoGradGuard g;
  auto z = bundle_.encoder->forward(one).z_id;
  EXPECT_TRUE(torch::allclose(r.synthetic_z_id, z, 1e-6, 1e-7));
}

TEST_F(AnonymizationTest, FewerThanTwoDonorsIsContractError) {
  EXPECT_THROW(average_identities(bundle_, images_, torch::rand({1, 1, 16, 16})), ContractError);
}

TEST_F(AnonymizationTest, CounterfactualWithItselfIsReconstruction) {
  auto r = counterfactual(bundle_, images_, images_);
  torch::NoGradGuard g;
  auto recon = bundle_.decoder->forward(bundle_.encoder->forward(images_).concat());
  EXPECT_TRUE(bitwise_equal(r.image, recon));
}

TEST_F(AnonymizationTest, CounterfactualKeepsIdentityAndResidualSlots) {
  auto targets = torch::rand({5, 1, 16, 16});
  auto r = counterfactual(bundle_, images_, targets);
  EXPECT_TRUE(bitwise_equal(r.decoder_input.narrow(1, 0, cfg_.d_id), r.source_latents.z_id));
  EXPECT_TRUE(bitwise_equal(r.decoder_input.narrow(1, cfg_.d_id, cfg_.d_med),
                            r.target_latents.z_med));
  EXPECT_TRUE(bitwise_equal(r.decoder_input.narrow(1, cfg_.d_id + cfg_.d_med, cfg_.d_rest),
                            r.source_latents.z_rest));
  EXPECT_THROW(counterfactual(bundle_, images_, torch::rand({2, 1, 16, 16})), ContractError);
}

TEST(SelectDonorsTest, DistinctOtherIdentities) {
  auto data = testutil::tiny_dataset(60);
  std::mt19937_64 rng(1);
  auto donors = select_donors(data.train, 0, 2, rng);
  ASSERT_EQ(donors.size(), 2u);
  std::set<int> ids;
  for (const auto* d : donors) {
    EXPECT_NE(d->identity, 0);
    ids.insert(d->identity);
  }
  EXPECT_EQ(ids.size(), 2u);
  EXPECT_EQ(select_donors(data.train, 1, 0, rng).size(), 2u);
  EXPECT_THROW(select_donors(data.train, 0, 3, rng), ContractError);
}

TEST(MethodNameTest, Names) {
  EXPECT_EQ(to_string(AnonymizationMethod::kVae), "vae");
  EXPECT_EQ(to_string(AnonymizationMethod::kVaeNoEntropy), "vae_no_entropy");
  EXPECT_EQ(to_string(AnonymizationMethod::kAverage), "average_k");
}

}  // namespace
}  // namespace disentangle
