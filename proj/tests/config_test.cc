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

#include "disentangle/config.h"

#include <fstream>

#include <gtest/gtest.h>

#include "disentangle/errors.h"
#include "test_util.h"

namespace disentangle {
namespace {

struct PresetCase {
  std::string name;
  IdentityMode mode;
  double med, id, r, d;
};

class PresetTest : public ::testing::TestWithParam<PresetCase> {};

TEST_P(PresetTest, LoadsPresetWeightsAndMode) {
  const auto& p = GetParam();
  TrainConfig cfg;
  apply_preset(cfg, p.name);
  EXPECT_EQ(cfg.mode, p.mode);
  EXPECT_EQ(cfg.network.mode, p.mode);
  EXPECT_DOUBLE_EQ(cfg.weights.lambda_med, p.med);
  EXPECT_DOUBLE_EQ(cfg.weights.lambda_id, p.id);
  EXPECT_DOUBLE_EQ(cfg.weights.lambda_r, p.r);
  EXPECT_DOUBLE_EQ(cfg.weights.lambda_d, p.d);
  EXPECT_DOUBLE_EQ(cfg.weights.alpha, 48.0);
  EXPECT_DOUBLE_EQ(cfg.learning_rate, 2e-5);
  EXPECT_NO_THROW(cfg.validate());
}

INSTANTIATE_TEST_SUITE_P(
    Presets, PresetTest,
    ::testing::Values(PresetCase{"chest", IdentityMode::kSiamese, 5, 5, 1, 5},
                      PresetCase{"face", IdentityMode::kSiamese, 0.5, 10, 0.02, 10},
                      PresetCase{"iris", IdentityMode::kMulticlass, 1, 1, 0.1, 5}),
    [](const auto& info) { return info.param.name; });

TEST(PresetTest, UnknownPresetIsConfigError) {
  TrainConfig cfg;
  EXPECT_THROW(apply_preset(cfg, "retina"), ConfigError);
}

TEST(TrainConfigTest, DefaultsValidate) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.learning_rate, 2e-5);
  EXPECT_EQ(cfg.batch_size, 16);
  EXPECT_DOUBLE_EQ(cfg.augmentation.crop_fraction, 0.875);
  EXPECT_DOUBLE_EQ(cfg.augmentation.brightness_delta, 0.2);
  EXPECT_DOUBLE_EQ(cfg.augmentation.flip_probability, 0.5);
}

TEST(TrainConfigTest, BoundsAreEnforced) {
  TrainConfig cfg;
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.augmentation.flip_probability = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TrainConfigTest, JsonSnapshotRebuildsTheConfig) {
  TrainConfig cfg;
  apply_preset(cfg, "iris");
  cfg.seed = 99;
  cfg.network.base_width = 12;
  auto back = train_config_from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.hash(), cfg.hash());
  EXPECT_EQ(cfg.hash().size(), 16u);
}

TEST(TrainConfigTest, HashChangesWithAnyKey) {
  TrainConfig a, b;
  b.weights.margin = 0.2;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(ConfigKeysTest, EveryKeyRoundTripsThroughItsString) {
  TrainConfig cfg;
  for (const auto& k : train_config_keys()) {
    TrainConfig copy;
    EXPECT_NO_THROW(apply_setting(copy, k.name, k.get(cfg))) << k.name;
    EXPECT_EQ(k.get(copy), k.get(cfg)) << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
  }
}

TEST(ConfigKeysTest, UnknownKeyAndBadValueAreConfigErrors) {
  TrainConfig cfg;
  EXPECT_THROW(apply_setting(cfg, "lambda_x", "1"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "epochs", "ten"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "mode", "hybrid"), ConfigError);
}

TEST(ResolveConfigTest, FlagBeatsFileBeatsPresetBeatsDefault) {
  auto dir = testutil::temp_dir("cfg");
  const auto file = dir / "run.toml";
  {
    std::ofstream out(file);
    out << "# comment\n[training]\nlambda_id = 7  # inline\nlambda-r = 0.5\n"
        << "checkpoint_dir = \"a # b\"\n";
  }
  auto cfg = resolve_config("chest", file, {{"lambda_r", "0.25"}});
  EXPECT_DOUBLE_EQ(cfg.weights.lambda_med, 5.0);  // preset
  EXPECT_DOUBLE_EQ(cfg.weights.lambda_id, 7.0);   // file over preset
  EXPECT_DOUBLE_EQ(cfg.weights.lambda_r, 0.25);   // flag over file
  EXPECT_DOUBLE_EQ(cfg.weights.margin, 0.1);      // default
  EXPECT_EQ(cfg.checkpoint_dir, "a # b");
  std::filesystem::remove_all(dir);
}

TEST(ResolveConfigTest, MalformedLineIsConfigError) {
  auto dir = testutil::temp_dir("badcfg");
  {
    std::ofstream out(dir / "bad.toml");
    out << "epochs 3\n";
  }
  EXPECT_THROW(read_config_file(dir / "bad.toml"), ConfigError);
  EXPECT_THROW(read_config_file(dir / "absent.toml"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(ResolveConfigTest, SeedAndModePropagateToNetwork) {
  auto cfg = resolve_config("", {}, {{"seed", "12"}, {"mode", "multiclass"}});
  EXPECT_EQ(cfg.network.seed, 12u);
  EXPECT_EQ(cfg.network.mode, IdentityMode::kMulticlass);
}

}  // namespace
}  // namespace disentangle
