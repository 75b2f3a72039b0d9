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

#include "disentangle/datasets.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "disentangle/errors.h"
#include "disentangle/image_io.h"
#include "test_util.h"

namespace disentangle {
namespace {

using testutil::bitwise_equal;
namespace fs = std::filesystem;

FactorSpec small_spec() {
  FactorSpec s;
  s.num_identities = 3;
  s.num_classes = 2;
  s.image_size = 16;
  s.train_samples = 200;
  s.validation_samples = 20;
  s.test_samples = 20;
  return s;
}

TEST(FactorSpecTest, BoundsAreEnforced) {
  auto s = small_spec();
  s.num_identities = 2;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
  s = small_spec();
  s.num_classes = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.image_size = 8;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(FactorSpecTest, ErrorNamesTheViolatedBound) {
  auto s = small_spec();
  s.num_identities = 2;
  try {
    s.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("num_identities"), std::string::npos);
  }
}

TEST(SyntheticTest, SameSpecGivesIdenticalData) {
  auto a = generate_synthetic(small_spec());
  auto b = generate_synthetic(small_spec());
  ASSERT_EQ(a.train.size(), b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(a.train[i].image, b.train[i].image));
    EXPECT_EQ(a.train[i].identity, b.train[i].identity);
    EXPECT_EQ(a.train[i].label, b.train[i].label);
  }
  auto c = small_spec();
  c.seed = 8;
  EXPECT_FALSE(bitwise_equal(a.train[0].image, generate_synthetic(c).train[0].image));
}

TEST(SyntheticTest, WrittenDatasetIsByteIdentical) {
  auto d1 = testutil::temp_dir("gen1"), d2 = testutil::temp_dir("gen2");
  write_dataset(generate_synthetic(small_spec()), d1);
  write_dataset(generate_synthetic(small_spec()), d2);
  size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file()) continue;
    auto other = d2 / fs::relative(e.path(), d1);
    std::ifstream x(e.path(), std::ios::binary), y(other, std::ios::binary);
    std::string sx((std::istreambuf_iterator<char>(x)), {});
    std::string sy((std::istreambuf_iterator<char>(y)), {});
    EXPECT_EQ(sx, sy) << e.path();
    ++files;
  }
  EXPECT_GT(files, 200u);
  EXPECT_TRUE(fs::exists(d1 / "manifest.csv"));
  EXPECT_TRUE(fs::exists(d1 / "factors.json"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(SyntheticTest, EveryIdentityAppearsInBothClasses) {
  auto d = generate_synthetic(small_spec());
  std::set<std::pair<int, int>> seen;
  for (const auto& s : d.train) seen.insert({s.identity, s.label});
  for (int id = 0; id < 3; ++id) {
    EXPECT_TRUE(seen.count({id, 0})) << id;
    EXPECT_TRUE(seen.count({id, 1})) << id;
  }
}

TEST(SyntheticTest, PixelsInUnitIntervalAndFactorsRecorded) {
  auto d = generate_synthetic(small_spec());
  for (const auto* split : {&d.train, &d.validation, &d.test}) {
    for (const auto& s : *split) {
      EXPECT_GE(s.image.min().item<float>(), 0.0f);
      EXPECT_LE(s.image.max().item<float>(), 1.0f);
      EXPECT_TRUE(s.factors.has_value());
    }
  }
}

TEST(SyntheticTest, ClassRatioPreservedAcrossSplits) {
  auto spec = small_spec();
  spec.validation_samples = 100;
  spec.test_samples = 100;
  auto d = generate_synthetic(spec);
  const double train = class_fraction(d.train, 1);
  EXPECT_NEAR(class_fraction(d.validation, 1), train, 0.02);
  EXPECT_NEAR(class_fraction(d.test, 1), train, 0.02);
}

TEST(SyntheticTest, LesionMarksClassOne) {
  auto d = generate_synthetic(small_spec());
  double sum[2] = {0, 0};
  int count[2] = {0, 0};
  for (const auto& s : d.train) {
    sum[s.label] += s.image.sum().item<double>();
    ++count[s.label];
  }
  EXPECT_GT(sum[1] / count[1], sum[0] / count[0]);
}

// Writes `n` tiny PNGs plus a manifest; class 1 for rows where `positive(i)`.
fs::path write_manifest_dataset(const std::string& name, int n, int per_identity,
                                const std::function<bool(int)>& positive, bool split_column) {
  auto root = testutil::temp_dir(name);
  fs::create_directories(root / "img");
  std::ofstream m(root / "manifest.csv");
  m << "path,identity,class" << (split_column ? ",split" : "") << "\n";
  for (int i = 0; i < n; ++i) {
    const auto file = root / "img" / ("s" + std::to_string(i) + ".png");
    write_png(file, torch::full({1, 4, 4}, (i % 7) / 7.0));
    m << "img/s" << i << ".png," << i / per_identity << "," << (positive(i) ? 1 : 0);
    if (split_column) m << "," << (i % 2 ? "test" : "train");
    m << "\n";
  }
  return root;
}

TEST(LoadDirectoryTest, FourRowsAllPresent) {
  auto root = write_manifest_dataset("four", 4, 2, [](int i) { return i % 2; }, true);
  LoadOptions o;
  o.image_size = 16;
  auto d = load_directory_dataset(root, root / "manifest.csv", o);
  EXPECT_EQ(d.train.size() + d.validation.size() + d.test.size(), 4u);
  EXPECT_EQ(d.train.size(), 2u);
  EXPECT_EQ(d.test.size(), 2u);
  EXPECT_EQ(d.train[0].image.sizes(), (std::vector<int64_t>{1, 16, 16}));
  fs::remove_all(root);
}

TEST(LoadDirectoryTest, MissingFileIsNamed) {
  auto root = write_manifest_dataset("missing", 4, 2, [](int i) { return i % 2; }, false);
  fs::remove(root / "img" / "s2.png");
  try {
    load_directory_dataset(root, root / "manifest.csv", LoadOptions{});
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("s2.png"), std::string::npos);
  }
  fs::remove_all(root);
}

TEST(LoadDirectoryTest, SiameseNeedsTwoSamplesPerIdentity) {
  auto root = write_manifest_dataset("single", 4, 1, [](int i) { return i % 2; }, false);
  LoadOptions o;
  o.mode = IdentityMode::kSiamese;
  EXPECT_THROW(load_directory_dataset(root, root / "manifest.csv", o), IngestionError);
  fs::remove_all(root);
}

TEST(LoadDirectoryTest, StratifiedSplitKeepsClassRatio) {
  // 100 samples, 24 positive, one identity each.
  auto root = write_manifest_dataset("ratio", 100, 1, [](int i) { return i % 25 < 6; }, false);
  LoadOptions o;
  o.image_size = 16;
  o.seed = 3;
  auto d = load_directory_dataset(root, root / "manifest.csv", o);
  EXPECT_EQ(d.train.size() + d.validation.size() + d.test.size(), 100u);
  for (const auto* s : {&d.train, &d.validation, &d.test}) {
    ASSERT_FALSE(s->empty());
    EXPECT_NEAR(class_fraction(*s, 1), 0.24, 0.02);
  }
  fs::remove_all(root);
}

TEST(LoadDirectoryTest, IdentityNeverStraddlesSplits) {
  auto root = write_manifest_dataset("disjoint", 60, 4, [](int i) { return i % 2; }, false);
  LoadOptions o;
  o.image_size = 16;
  auto d = load_directory_dataset(root, root / "manifest.csv", o);
  std::map<int, int> split_of;
  int which = 0;
  for (const auto* s : {&d.train, &d.validation, &d.test}) {
    for (const auto& x : *s) {
      auto [it, fresh] = split_of.emplace(x.identity, which);
      EXPECT_EQ(it->second, which) << "identity " << x.identity;
    }
    ++which;
  }
  fs::remove_all(root);
}

TEST(TripletSamplerTest, InvariantsHoldOverTenThousandDraws) {
  auto d = generate_synthetic(small_spec());
  TripletSampler sampler(d.train, IdentityMode::kSiamese);
  std::mt19937_64 rng(1);
  std::set<std::pair<int, int>> class_pairs;
  for (int i = 0; i < 10000; ++i) {
    auto t = sampler.sample(rng);
    ASSERT_NE(t.original->identity, t.target->identity);
    ASSERT_NE(t.original->label, t.target->label);
    ASSERT_NE(t.same_identity, nullptr);
    ASSERT_NE(t.same_identity, t.original);
    ASSERT_EQ(t.same_identity->patient_key, t.original->patient_key);
    class_pairs.insert({t.original->label, t.target->label});
  }
  EXPECT_EQ(class_pairs, (std::set<std::pair<int, int>>{{0, 1}, {1, 0}}));
}

TEST(TripletSamplerTest, MulticlassOmitsSameIdentity) {
  auto d = generate_synthetic(small_spec());
  std::mt19937_64 rng(2);
  EXPECT_EQ(sample_triplet(d.train, IdentityMode::kMulticlass, rng).same_identity, nullptr);
}

TEST(TripletSamplerTest, TargetsAreUniformOverValidChoices) {
  auto d = generate_synthetic(small_spec());
  TripletSampler sampler(d.train, IdentityMode::kMulticlass);
  std::mt19937_64 rng(5);
  std::map<const LabeledSample*, int> hits;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) ++hits[sampler.sample_for(0, rng).target];
  size_t valid = 0;
  for (const auto& s : d.train) {
    if (s.identity != d.train[0].identity && s.label != d.train[0].label) ++valid;
  }
  EXPECT_EQ(hits.size(), valid);
  const double expected = static_cast<double>(draws) / valid;
  for (const auto& [t, n] : hits) EXPECT_NEAR(n, expected, 5 * std::sqrt(expected));
}

TEST(TripletSamplerTest, SingleClassIsSamplingError) {
  auto d = generate_synthetic(small_spec());
  std::vector<LabeledSample> one;
  for (const auto& s : d.train) {
    if (s.label == 0) one.push_back(s);
  }
  std::mt19937_64 rng(3);
  EXPECT_THROW(sample_triplet(one, IdentityMode::kMulticlass, rng), SamplingError);
}

TEST(TripletSamplerTest, SingleSampleIdentityExcludedInSiameseMode) {
  auto d = generate_synthetic(small_spec());
  std::vector<LabeledSample> samples;
  for (const auto& s : d.train) {
    if (s.identity != 2) samples.push_back(s);
  }
  // Identity 2 with a single sample.
  for (const auto& s : d.train) {
    if (s.identity == 2) {
      samples.push_back(s);
      break;
    }
  }
  const size_t lone = samples.size() - 1;
  TripletSampler sampler(samples, IdentityMode::kSiamese);
  const auto& e = sampler.eligible_originals();
  EXPECT_EQ(std::find(e.begin(), e.end(), lone), e.end());
  std::mt19937_64 rng(4);
  EXPECT_THROW(sampler.sample_for(lone, rng), SamplingError);
  TripletSampler multi(samples, IdentityMode::kMulticlass);
  const auto& m = multi.eligible_originals();
  EXPECT_NE(std::find(m.begin(), m.end(), lone), m.end());
}

TEST(IdentityModeTest, ParsesNames) {
  EXPECT_EQ(identity_mode_from_string("siamese"), IdentityMode::kSiamese);
  EXPECT_EQ(identity_mode_from_string(to_string(IdentityMode::kMulticlass)),
            IdentityMode::kMulticlass);
  EXPECT_THROW(identity_mode_from_string("both"), ConfigError);
}

}  // namespace
}  // namespace disentangle
