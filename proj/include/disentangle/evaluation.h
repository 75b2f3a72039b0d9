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

// Evaluation protocol: realism (single and double pass SSIM), identity
// recognition against the original, the target and the whole training
// gallery, disease recognition, and the ablation studies.
//
// Generation and recognition are behind small interfaces so the protocol
// can be exercised with stubs. Every experiment first produces one
// SampleRecord per (original, target) pair; aggregates are computed only
// from those records.

#ifndef DISENTANGLE_EVALUATION_H_
#define DISENTANGLE_EVALUATION_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "disentangle/anonymization.h"
#include "disentangle/config.h"
#include "disentangle/datasets.h"
#include "disentangle/metrics.h"
#include "disentangle/networks.h"
#include "json.hpp"

namespace disentangle {

enum class Experiment { kReconstruction, kMedicalReplacement, kIdentityReplacement, kAnonymization };

std::string to_string(Experiment e);
// Accepts full names and the short forms recon, med, id, anon.
Experiment experiment_from_string(const std::string& name);
// Comma-separated list.
std::vector<Experiment> parse_experiments(const std::string& list);

enum class Source { kOriginal, kTarget, kNone };

// Whose identity and whose class the generated image should carry.
struct ExpectedTargets {
  Source identity;
  Source disease;
  bool double_pass;  // "generated x2" defined for this experiment
};
ExpectedTargets expected_targets(Experiment e);

struct MatchDecision {
  double distance = 0.0;
  double threshold_t = 0.05;
  bool same_identity = false;

  static MatchDecision decide(double distance, double threshold_t);
};

struct GenerationRequest {
  Experiment experiment = Experiment::kReconstruction;
  torch::Tensor original;              // [N, C, H, W]
  torch::Tensor target;                // [N, C, H, W]
  std::vector<int> original_identity;  // per row
  uint64_t seed = 0;                   // row i uses seed + i
};

class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  virtual torch::Tensor generate(const GenerationRequest& request) = 0;
};

class Recognizer {
 public:
  virtual ~Recognizer() = default;
  virtual IdentityMode mode() const = 0;
  // Siamese: identity embeddings [N, d]. Multiclass: probabilities [N, I].
  virtual torch::Tensor identity(const torch::Tensor& images) = 0;
  // Disease probabilities [N, K].
  virtual torch::Tensor disease(const torch::Tensor& images) = 0;
};

struct AnonymizerSpec {
  AnonymizationMethod method = AnonymizationMethod::kVae;
  int k = 0;  // donors for kAverage; 0 = all other identities
};

// Latent surgery with a trained bundle. Anonymization needs `vae` (VAE
// methods) or `donor_pool` (averaging).
class BundleGenerator : public ImageGenerator {
 public:
  BundleGenerator(NetworkBundle& bundle, IdentityVae vae = nullptr,
                  const std::vector<LabeledSample>* donor_pool = nullptr,
                  AnonymizerSpec spec = {});
  torch::Tensor generate(const GenerationRequest& request) override;

 private:
  NetworkBundle& bundle_;
  IdentityVae vae_;
  const std::vector<LabeledSample>* donor_pool_;
  AnonymizerSpec spec_;
};

// The bundle's own heads: z_id (siamese) or c_id (multiclass), and c_med.
class BundleRecognizer : public Recognizer {
 public:
  explicit BundleRecognizer(NetworkBundle& bundle);
  IdentityMode mode() const override { return bundle_.config.mode; }
  torch::Tensor identity(const torch::Tensor& images) override;
  torch::Tensor disease(const torch::Tensor& images) override;

 private:
  NetworkBundle& bundle_;
};

// Fresh encoder and heads trained with the classification loss only on the
// validation split, so the generator is not graded by its own heads.
NetworkBundle train_external_evaluator(const DatasetSplit& data, const TrainConfig& cfg);

struct EvalPair {
  const LabeledSample* original = nullptr;
  const LabeledSample* target = nullptr;
};

// One pair per eligible test sample; the target has another identity and
// another class. At most `max_pairs` (0 = all), deterministic in `seed`.
std::vector<EvalPair> make_eval_pairs(const std::vector<LabeledSample>& test, uint64_t seed,
                                      size_t max_pairs = 0);

struct SampleRecord {
  Experiment experiment = Experiment::kReconstruction;
  size_t index = 0;
  std::string original_name;
  std::string target_name;
  int original_identity = 0;
  int target_identity = 0;
  int original_class = 0;
  int target_class = 0;
  double ssim_original = 0.0;
  std::optional<double> ssim_generated_x2;
  // Siamese: distances from the generated image's embedding.
  std::optional<double> distance_original;
  std::optional<double> distance_target;
  std::optional<double> gallery_min_distance;           // any training image
  std::optional<double> gallery_min_distance_original;  // original's training images
  // Multiclass: identity prediction and its confidence.
  std::optional<int> predicted_identity;
  std::optional<double> max_confidence;
  int predicted_class = 0;
  int expected_class = 0;

  nlohmann::json to_json() const;
  static SampleRecord from_json(const nlohmann::json& j);
};

struct EvalRow {
  Experiment experiment = Experiment::kReconstruction;
  size_t count = 0;
  double ssim_original = 0.0;
  std::optional<double> ssim_generated_x2;
  std::optional<double> id_acc_original;
  std::optional<double> id_acc_original_gallery;
  std::optional<double> id_acc_target;
  std::optional<double> id_acc_overall;
  std::optional<double> id_max_confidence;
  double disease_accuracy = 0.0;
  double disease_f1 = 0.0;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  std::vector<Experiment> experiments{Experiment::kReconstruction,
                                      Experiment::kMedicalReplacement,
                                      Experiment::kIdentityReplacement};
  double threshold_t = 0.05;
  uint64_t seed = 0;
  size_t max_pairs = 0;
  MetricConfig metrics;
};

// Runs `experiment` over `pairs`. `gallery` (training images) is required in
// siamese mode; ContractError otherwise or when `pairs` is empty.
std::vector<SampleRecord> run_experiment(ImageGenerator& generator, Recognizer& recognizer,
                                         const std::vector<EvalPair>& pairs,
                                         const std::vector<LabeledSample>& gallery,
                                         Experiment experiment, const EvalOptions& options);

// Aggregates records of one experiment; exact counts over n.
EvalRow aggregate(const std::vector<SampleRecord>& records, double threshold_t);

struct RealismScores {
  double ssim_original = 0.0;
  std::optional<double> ssim_generated_x2;
};
struct IdentityScores {
  std::optional<double> original;
  std::optional<double> target;
  std::optional<double> overall;
  std::optional<double> max_confidence;
};
struct DiseaseScores {
  double accuracy = 0.0;
  double f1 = 0.0;
};

RealismScores realism_eval(ImageGenerator& generator, Recognizer& recognizer,
                           const std::vector<EvalPair>& pairs,
                           const std::vector<LabeledSample>& gallery, Experiment experiment,
                           const EvalOptions& options);
IdentityScores identity_eval(ImageGenerator& generator, Recognizer& recognizer,
                             const std::vector<EvalPair>& pairs,
                             const std::vector<LabeledSample>& gallery, Experiment experiment,
                             const EvalOptions& options);
DiseaseScores disease_eval(ImageGenerator& generator, Recognizer& recognizer,
                           const std::vector<EvalPair>& pairs,
                           const std::vector<LabeledSample>& gallery, Experiment experiment,
                           const EvalOptions& options);

// Positive-class (label 1) F1; 1 when there are no positives at all.
double positive_f1(const std::vector<int>& predicted, const std::vector<int>& expected);

struct EvalReport {
  IdentityMode mode = IdentityMode::kSiamese;
  double threshold_t = 0.05;
  std::vector<EvalRow> rows;

  nlohmann::json to_json() const;
  // Aligned columns; absent values print as "-".
  std::string to_text() const;
};

struct EvalOutput {
  EvalReport report;
  std::vector<SampleRecord> records;
};

EvalOutput evaluate(ImageGenerator& generator, Recognizer& recognizer,
                    const std::vector<LabeledSample>& test,
                    const std::vector<LabeledSample>& gallery, const EvalOptions& options);

void write_records(const std::filesystem::path& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_records(const std::filesystem::path& path);

// Grid of images, one row per entry of `rows`, each row a list of [C, H, W]
// tensors. Cells are separated by a 2 pixel white border.
void write_contact_sheet(const std::filesystem::path& path,
                         const std::vector<std::vector<torch::Tensor>>& rows);

// Contact sheet of (original | reconstruction | medical | identity
// [| anonymized]) for the first `n` pairs.
void write_bundle_contact_sheet(const std::filesystem::path& path, NetworkBundle& bundle,
                                IdentityVae vae, const std::vector<EvalPair>& pairs, size_t n,
                                uint64_t seed);

// Ablations -----------------------------------------------------------------

struct AblationRow {
  std::string variant;
  double ssim = 0.0;
  double identity_accuracy = 0.0;
  double disease_accuracy = 0.0;
  size_t train_size = 0;
  std::string init_hash;   // parameter hash of the starting networks
  std::string final_hash;  // parameter hash of the selected networks
};

struct AblationTable {
  std::string kind;  // "realism" or "datasize"
  std::vector<AblationRow> rows;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

// only_ssim, only_psnr, ssim_psnr, gan_no_aug, gan_aug_finetune,
// gan_aug_scratch.
const std::vector<std::string>& realism_variants();
std::string realism_variant_label(const std::string& variant);

// Trains each variant with cfg's epoch budget and reports validation metrics
// (reconstruction SSIM first). gan_aug_finetune starts from the ssim_psnr
// networks, trained on demand if not in `variants`. Unknown names throw
// ConfigError. Checkpoints go to `<cfg.checkpoint_dir>/<variant>` if set.
AblationTable run_ablation_realism(const DatasetSplit& data, const TrainConfig& cfg,
                                   const std::vector<std::string>& variants);

// Trains on nested random subsets of the training split (one seeded
// permutation, prefixes of it). Sizes above the training size throw ConfigError.
AblationTable run_ablation_datasize(const DatasetSplit& data, const TrainConfig& cfg,
                                    const std::vector<size_t>& sizes);

// The first `n` picks of a seeded permutation of `samples`, in their original
// order. Smaller sizes give subsets of larger ones.
std::vector<LabeledSample> nested_subset(const std::vector<LabeledSample>& samples, size_t n,
                                         uint64_t seed);

}  // namespace disentangle

#endif  // DISENTANGLE_EVALUATION_H_
