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

// Factor-labeled image datasets and training-triplet sampling.
//
// Two sources are supported: a procedural generator whose identity, class
// and nuisance factors are known exactly, and a directory of PNG files
// described by a CSV manifest. Both produce a DatasetSplit of immutable
// LabeledSample values; TripletSampler draws (original, target, same) triples
// from one split.

#ifndef DISENTANGLE_DATASETS_H_
#define DISENTANGLE_DATASETS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

namespace disentangle {

enum class IdentityMode { kMulticlass, kSiamese };

std::string to_string(IdentityMode mode);
IdentityMode identity_mode_from_string(const std::string& name);

struct NuisanceSpec {
  double translation_px = 2.0;
  double rotation_deg = 10.0;
  double brightness_jitter = 0.1;
};

// Parameters of the procedural dataset. Sample counts are per split.
struct FactorSpec {
  int num_identities = 8;
  int num_classes = 2;
  int image_size = 32;
  int channels = 1;
  int train_samples = 800;
  int validation_samples = 160;
  int test_samples = 160;
  NuisanceSpec nuisance;
  uint64_t seed = 7;

  // Throws ConfigError naming the violated bound.
  void validate() const;
};

// Ground-truth nuisance parameters of one synthetic sample.
struct SampleFactors {
  double dx = 0.0;
  double dy = 0.0;
  double rotation_deg = 0.0;
  double brightness = 1.0;
  double lesion_x = 0.0;
  double lesion_y = 0.0;
};

struct LabeledSample {
  torch::Tensor image;  // float32 [C, H, W], values in [0, 1]
  int identity = 0;
  int label = 0;  // medical class
  std::string patient_key;
  std::string name;  // unique within a dataset; file stem on disk
  std::optional<SampleFactors> factors;
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> validation;
  std::vector<LabeledSample> test;
  int num_identities = 0;
  int num_classes = 0;
  int image_size = 0;
  int channels = 1;
};

// Fraction of samples in `samples` whose label equals `label`.
double class_fraction(const std::vector<LabeledSample>& samples, int label);

// Deterministic procedural dataset: every identity has its own template of
// blobs inside an elliptical body; class k > 0 adds a bright elliptical
// marker at a class-specific site; translation, rotation and brightness are
// drawn per sample.
DatasetSplit generate_synthetic(const FactorSpec& spec);

// Writes `images/<name>.png`, `manifest.csv` (path,identity,class,split) and
// `factors.json` under `root`.
void write_dataset(const DatasetSplit& split, const std::filesystem::path& root);

struct LoadOptions {
  int image_size = 32;
  int channels = 1;
  IdentityMode mode = IdentityMode::kMulticlass;
  uint64_t seed = 0;
  // Split fractions used when the manifest has no split column.
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  // When true an identity never appears in more than one split.
  bool identity_disjoint = true;
};

// Reads a `path,identity,class[,split]` CSV manifest. Relative paths are
// resolved against `root`. Identities may be arbitrary strings; they are
// numbered in order of first appearance.
DatasetSplit load_directory_dataset(const std::filesystem::path& root,
                                    const std::filesystem::path& manifest,
                                    const LoadOptions& options);

// Convenience: `root/manifest.csv`, image size and channels taken from the
// first image.
DatasetSplit load_dataset_dir(const std::filesystem::path& root,
                              IdentityMode mode, uint64_t seed = 0,
                              bool identity_disjoint = true);

struct TrainingTriplet {
  const LabeledSample* original = nullptr;
  const LabeledSample* target = nullptr;
  const LabeledSample* same_identity = nullptr;  // siamese mode only
};

// Draws training triplets from one list of samples. Holds its own index
// tables; the samples must outlive the sampler.
class TripletSampler {
 public:
  TripletSampler(const std::vector<LabeledSample>& samples, IdentityMode mode);

  // Uniform original among the eligible ones, then a triplet for it.
  TrainingTriplet sample(std::mt19937_64& rng) const;
  // Triplet for a fixed original; throws SamplingError if it is ineligible.
  TrainingTriplet sample_for(size_t original_index, std::mt19937_64& rng) const;

  // Indices that may serve as the original of a triplet.
  const std::vector<size_t>& eligible_originals() const { return eligible_; }
  IdentityMode mode() const { return mode_; }

 private:
  size_t valid_target_count(int identity, int label) const;

  const std::vector<LabeledSample>& samples_;
  IdentityMode mode_;
  std::vector<size_t> eligible_;
  std::vector<std::vector<size_t>> by_identity_;
  std::vector<std::vector<size_t>> by_class_;
  // Sample counts per (identity, class), flattened as identity * K + class.
  std::vector<size_t> identity_class_count_;
  int num_classes_ = 0;
};

// Convenience wrapper over TripletSampler for one-off draws.
TrainingTriplet sample_triplet(const std::vector<LabeledSample>& samples,
                               IdentityMode mode, std::mt19937_64& rng);

// Stacks the images of `samples` into [N, C, H, W].
torch::Tensor stack_images(const std::vector<const LabeledSample*>& samples);
torch::Tensor stack_images(const std::vector<LabeledSample>& samples);

}  // namespace disentangle

#endif  // DISENTANGLE_DATASETS_H_
