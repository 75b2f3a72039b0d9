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

#include "disentangle/evaluation.h"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "disentangle/errors.h"
#include "disentangle/image_io.h"
#include "disentangle/training.h"

namespace disentangle {
namespace {

constexpr size_t kEvalBatch = 64;

template <typename T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

// Mean squared distance of every row of `a` to every row of `b`, [Na, Nb].
torch::Tensor gallery_distance(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.unsqueeze(1) - b.unsqueeze(0)).pow(2).mean(-1);
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::kReconstruction: return "reconstruction";
    case Experiment::kMedicalReplacement: return "medical_replacement";
    case Experiment::kIdentityReplacement: return "identity_replacement";
    case Experiment::kAnonymization: return "anonymization";
  }
  return "unknown";
}

Experiment experiment_from_string(const std::string& name) {
  if (name == "reconstruction" || name == "recon") return Experiment::kReconstruction;
  if (name == "medical_replacement" || name == "med") return Experiment::kMedicalReplacement;
  if (name == "identity_replacement" || name == "id") return Experiment::kIdentityReplacement;
  if (name == "anonymization" || name == "anon") return Experiment::kAnonymization;
  throw ConfigError("unknown experiment '" + name + "'");
}

std::vector<Experiment> parse_experiments(const std::string& list) {
  std::vector<Experiment> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(experiment_from_string(item));
  }
  if (out.empty()) throw ConfigError("empty experiment list");
  return out;
}

ExpectedTargets expected_targets(Experiment e) {
  switch (e) {
    case Experiment::kReconstruction: return {Source::kOriginal, Source::kOriginal, true};
    case Experiment::kMedicalReplacement: return {Source::kOriginal, Source::kTarget, true};
    case Experiment::kIdentityReplacement: return {Source::kTarget, Source::kOriginal, true};
    case Experiment::kAnonymization: return {Source::kNone, Source::kOriginal, false};
  }
  throw ContractError("unknown experiment");
}

MatchDecision MatchDecision::decide(double distance, double threshold_t) {
  return {distance, threshold_t, distance < threshold_t};
}

BundleGenerator::BundleGenerator(NetworkBundle& bundle, IdentityVae vae,
                                 const std::vector<LabeledSample>* donor_pool,
                                 AnonymizerSpec spec)
    : bundle_(bundle), vae_(std::move(vae)), donor_pool_(donor_pool), spec_(spec) {}

torch::Tensor BundleGenerator::generate(const GenerationRequest& r) {
  torch::NoGradGuard no_grad;
  bundle_.eval();
  switch (r.experiment) {
    case Experiment::kReconstruction:
      return decode(bundle_.decoder, bundle_.config,
                    encode(bundle_.encoder, bundle_.config, r.original));
    case Experiment::kMedicalReplacement:
      return counterfactual(bundle_, r.original, r.target).image;
    case Experiment::kIdentityReplacement: {
      const auto ori = encode(bundle_.encoder, bundle_.config, r.original);
      const auto tar = encode(bundle_.encoder, bundle_.config, r.target);
      return decode(bundle_.decoder, bundle_.config,
                    replace_slot(ori, tar, LatentSlot::kIdentity));
    }
    case Experiment::kAnonymization: {
      std::vector<torch::Tensor> out;
      const int64_t n = r.original.size(0);
      for (int64_t i = 0; i < n; ++i) {
        const uint64_t seed = r.seed + static_cast<uint64_t>(i);
        const auto img = r.original[i];
        if (spec_.method == AnonymizationMethod::kAverage) {
          if (donor_pool_ == nullptr) throw ContractError("averaging needs a donor pool");
          if (r.original_identity.size() != static_cast<size_t>(n)) {
            throw ContractError("averaging needs the original identities");
          }
          std::mt19937_64 rng(seed);
          const auto donors = select_donors(*donor_pool_, r.original_identity[i], spec_.k, rng);
          out.push_back(average_identities(bundle_, img, stack_images(donors)).image);
        } else {
          if (!vae_) throw ContractError("anonymization needs an identity VAE");
          out.push_back(anonymize(bundle_, vae_, img, seed, spec_.method).image);
        }
      }
      return torch::cat(out, 0);
    }
  }
  throw ContractError("unknown experiment");
}

BundleRecognizer::BundleRecognizer(NetworkBundle& bundle) : bundle_(bundle) {}

torch::Tensor BundleRecognizer::identity(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  bundle_.eval();
  const auto z = encode(bundle_.encoder, bundle_.config, images).z_id;
  return bundle_.c_id ? bundle_.c_id->forward(z) : z;
}

torch::Tensor BundleRecognizer::disease(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  bundle_.eval();
  return bundle_.c_med->forward(encode(bundle_.encoder, bundle_.config, images).z_med);
}

NetworkBundle train_external_evaluator(const DatasetSplit& data, const TrainConfig& cfg) {
  if (data.validation.empty()) throw ConfigError("external evaluator needs a validation split");
  TrainConfig c = cfg;
  c.weights.lambda_r = 0.0;
  c.weights.lambda_d = 0.0;
  c.realism = {false, false, false};
  c.checkpoint_dir.clear();
  c.log_path.clear();
  c.freeze_classifiers = false;
  c.seed = cfg.seed + 1000003;
  DatasetSplit held_out = data;
  held_out.train = data.validation;
  held_out.validation.clear();
  return train_disentangler(held_out, c).bundle;
}

std::vector<EvalPair> make_eval_pairs(const std::vector<LabeledSample>& test, uint64_t seed,
                                      size_t max_pairs) {
  TripletSampler sampler(test, IdentityMode::kMulticlass);
  std::vector<size_t> idx = sampler.eligible_originals();
  std::mt19937_64 rng(seed);
  if (max_pairs > 0 && idx.size() > max_pairs) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_pairs);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<EvalPair> out;
  for (size_t i : idx) {
    const auto t = sampler.sample_for(i, rng);
    out.push_back({t.original, t.target});
  }
  return out;
}

nlohmann::json SampleRecord::to_json() const {
  nlohmann::json j = {{"experiment", to_string(experiment)},
                      {"index", index},
                      {"original", original_name},
                      {"target", target_name},
                      {"original_identity", original_identity},
                      {"target_identity", target_identity},
                      {"original_class", original_class},
                      {"target_class", target_class},
                      {"ssim_original", ssim_original},
                      {"predicted_class", predicted_class},
                      {"expected_class", expected_class}};
  put_optional(j, "ssim_generated_x2", ssim_generated_x2);
  put_optional(j, "distance_original", distance_original);
  put_optional(j, "distance_target", distance_target);
  put_optional(j, "gallery_min_distance", gallery_min_distance);
  put_optional(j, "gallery_min_distance_original", gallery_min_distance_original);
  put_optional(j, "predicted_identity", predicted_identity);
  put_optional(j, "max_confidence", max_confidence);
  return j;
}

SampleRecord SampleRecord::from_json(const nlohmann::json& j) {
  SampleRecord r;
  r.experiment = experiment_from_string(j.at("experiment").get<std::string>());
  r.index = j.at("index").get<size_t>();
  r.original_name = j.at("original").get<std::string>();
  r.target_name = j.at("target").get<std::string>();
  r.original_identity = j.at("original_identity").get<int>();
  r.target_identity = j.at("target_identity").get<int>();
  r.original_class = j.at("original_class").get<int>();
  r.target_class = j.at("target_class").get<int>();
  r.ssim_original = j.at("ssim_original").get<double>();
  r.predicted_class = j.at("predicted_class").get<int>();
  r.expected_class = j.at("expected_class").get<int>();
  r.ssim_generated_x2 = get_optional<double>(j, "ssim_generated_x2");
  r.distance_original = get_optional<double>(j, "distance_original");
  r.distance_target = get_optional<double>(j, "distance_target");
  r.gallery_min_distance = get_optional<double>(j, "gallery_min_distance");
  r.gallery_min_distance_original = get_optional<double>(j, "gallery_min_distance_original");
  r.predicted_identity = get_optional<int>(j, "predicted_identity");
  r.max_confidence = get_optional<double>(j, "max_confidence");
  return r;
}

nlohmann::json EvalRow::to_json() const {
  nlohmann::json j = {{"experiment", to_string(experiment)},
                      {"count", count},
                      {"ssim_original", ssim_original},
                      {"disease_accuracy", disease_accuracy},
                      {"disease_f1", disease_f1}};
  put_optional(j, "ssim_generated_x2", ssim_generated_x2);
  put_optional(j, "id_acc_original", id_acc_original);
  put_optional(j, "id_acc_original_gallery", id_acc_original_gallery);
  put_optional(j, "id_acc_target", id_acc_target);
  put_optional(j, "id_acc_overall", id_acc_overall);
  put_optional(j, "id_max_confidence", id_max_confidence);
  return j;
}

std::vector<SampleRecord> run_experiment(ImageGenerator& generator, Recognizer& recognizer,
                                         const std::vector<EvalPair>& pairs,
                                         const std::vector<LabeledSample>& gallery,
                                         Experiment experiment, const EvalOptions& options) {
  if (pairs.empty()) throw ContractError("evaluation set is empty");
  const bool siamese = recognizer.mode() == IdentityMode::kSiamese;
  if (siamese && gallery.empty()) throw ContractError("siamese evaluation needs a reference gallery");
  const ExpectedTargets expect = expected_targets(experiment);

  torch::Tensor gallery_emb, gallery_ids;
  if (siamese) {
    std::vector<torch::Tensor> chunks;
    std::vector<int64_t> ids;
    for (size_t b = 0; b < gallery.size(); b += kEvalBatch) {
      std::vector<const LabeledSample*> chunk;
      for (size_t i = b; i < std::min(gallery.size(), b + kEvalBatch); ++i) {
        chunk.push_back(&gallery[i]);
        ids.push_back(gallery[i].identity);
      }
      chunks.push_back(recognizer.identity(stack_images(chunk)));
    }
    gallery_emb = torch::cat(chunks, 0);
    gallery_ids = torch::tensor(ids, torch::kInt64);
  }

  std::vector<SampleRecord> out;
  for (size_t b = 0; b < pairs.size(); b += kEvalBatch) {
    const size_t e = std::min(pairs.size(), b + kEvalBatch);
    std::vector<const LabeledSample*> ori_s, tar_s;
    GenerationRequest req;
    req.experiment = experiment;
    req.seed = options.seed + b;
    for (size_t i = b; i < e; ++i) {
      ori_s.push_back(pairs[i].original);
      tar_s.push_back(pairs[i].target);
      req.original_identity.push_back(pairs[i].original->identity);
    }
    req.original = stack_images(ori_s);
    req.target = stack_images(tar_s);
    torch::NoGradGuard no_grad;
    const auto gen = generator.generate(req);
    if (gen.sizes() != req.original.sizes()) throw ContractError("generator changed the image shape");
    const auto s1 = ssim(req.original, gen, options.metrics);
    torch::Tensor s2;
    if (expect.double_pass) {
      GenerationRequest again = req;
      again.original = gen;
      s2 = ssim(gen, generator.generate(again), options.metrics);
    }
    const auto id_gen = recognizer.identity(gen);
    const auto pred_class = recognizer.disease(gen).argmax(1);
    torch::Tensor d_ori, d_tar, d_gal;
    if (siamese) {
      d_ori = siamese_distance(id_gen, recognizer.identity(req.original));
      d_tar = siamese_distance(id_gen, recognizer.identity(req.target));
      d_gal = gallery_distance(id_gen, gallery_emb);
    }
    for (size_t i = b; i < e; ++i) {
      const int64_t r = static_cast<int64_t>(i - b);
      SampleRecord rec;
      rec.experiment = experiment;
      rec.index = i;
      rec.original_name = pairs[i].original->name;
      rec.target_name = pairs[i].target->name;
      rec.original_identity = pairs[i].original->identity;
      rec.target_identity = pairs[i].target->identity;
      rec.original_class = pairs[i].original->label;
      rec.target_class = pairs[i].target->label;
      rec.ssim_original = s1[r].item<double>();
      if (s2.defined()) rec.ssim_generated_x2 = s2[r].item<double>();
      if (siamese) {
        rec.distance_original = d_ori[r].item<double>();
        rec.distance_target = d_tar[r].item<double>();
        const auto row = d_gal[r];
        rec.gallery_min_distance = row.min().item<double>();
        const auto mask = gallery_ids.eq(rec.original_identity);
        if (mask.any().item<bool>()) {
          rec.gallery_min_distance_original = row.masked_select(mask).min().item<double>();
        }
      } else {
        rec.predicted_identity = static_cast<int>(id_gen[r].argmax().item<int64_t>());
        rec.max_confidence = id_gen[r].max().item<double>();
      }
      rec.predicted_class = static_cast<int>(pred_class[r].item<int64_t>());
      rec.expected_class =
          expect.disease == Source::kTarget ? rec.target_class : rec.original_class;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

double positive_f1(const std::vector<int>& predicted, const std::vector<int>& expected) {
  if (predicted.size() != expected.size()) throw ContractError("prediction/label size mismatch");
  size_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == 1, y = expected[i] == 1;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

EvalRow aggregate(const std::vector<SampleRecord>& records, double threshold_t) {
  if (records.empty()) throw ContractError("no records to aggregate");
  EvalRow row;
  row.experiment = records.front().experiment;
  row.count = records.size();
  const double n = static_cast<double>(records.size());
  auto match = [&](const std::optional<double>& d) {
    return d && MatchDecision::decide(*d, threshold_t).same_identity;
  };
  double ssim_sum = 0.0, x2_sum = 0.0, conf_sum = 0.0;
  size_t x2_count = 0, ori = 0, ori_gallery = 0, tar = 0, overall = 0, disease_ok = 0;
  size_t gallery_defined = 0;
  bool siamese = false, multiclass = false;
  std::vector<int> pred, expected;
  for (const auto& r : records) {
    if (r.experiment != row.experiment) throw ContractError("records mix experiments");
    ssim_sum += r.ssim_original;
    if (r.ssim_generated_x2) {
      x2_sum += *r.ssim_generated_x2;
      ++x2_count;
    }
    if (r.distance_original) {
      siamese = true;
      ori += match(r.distance_original);
      tar += match(r.distance_target);
      overall += match(r.gallery_min_distance);
      if (r.gallery_min_distance_original) ++gallery_defined;
      ori_gallery += match(r.gallery_min_distance_original);
    }
    if (r.predicted_identity) {
      multiclass = true;
      ori += *r.predicted_identity == r.original_identity;
      tar += *r.predicted_identity == r.target_identity;
      conf_sum += r.max_confidence.value_or(0.0);
    }
    disease_ok += r.predicted_class == r.expected_class;
    pred.push_back(r.predicted_class);
    expected.push_back(r.expected_class);
  }
  row.ssim_original = ssim_sum / n;
  if (x2_count == records.size()) row.ssim_generated_x2 = x2_sum / n;
  if (siamese || multiclass) {
    row.id_acc_original = static_cast<double>(ori) / n;
    row.id_acc_target = static_cast<double>(tar) / n;
  }
  if (siamese) {
    row.id_acc_overall = static_cast<double>(overall) / n;
    if (gallery_defined > 0) row.id_acc_original_gallery = static_cast<double>(ori_gallery) / n;
  }
  if (multiclass) row.id_max_confidence = conf_sum / n;
  row.disease_accuracy = static_cast<double>(disease_ok) / n;
  row.disease_f1 = positive_f1(pred, expected);
  return row;
}

RealismScores realism_eval(ImageGenerator& generator, Recognizer& recognizer,
                           const std::vector<EvalPair>& pairs,
                           const std::vector<LabeledSample>& gallery, Experiment experiment,
                           const EvalOptions& options) {
  const auto row = aggregate(
      run_experiment(generator, recognizer, pairs, gallery, experiment, options),
      options.threshold_t);
  return {row.ssim_original, row.ssim_generated_x2};
}

IdentityScores identity_eval(ImageGenerator& generator, Recognizer& recognizer,
                             const std::vector<EvalPair>& pairs,
                             const std::vector<LabeledSample>& gallery, Experiment experiment,
                             const EvalOptions& options) {
  const auto row = aggregate(
      run_experiment(generator, recognizer, pairs, gallery, experiment, options),
      options.threshold_t);
  return {row.id_acc_original, row.id_acc_target, row.id_acc_overall, row.id_max_confidence};
}

DiseaseScores disease_eval(ImageGenerator& generator, Recognizer& recognizer,
                           const std::vector<EvalPair>& pairs,
                           const std::vector<LabeledSample>& gallery, Experiment experiment,
                           const EvalOptions& options) {
  const auto row = aggregate(
      run_experiment(generator, recognizer, pairs, gallery, experiment, options),
      options.threshold_t);
  return {row.disease_accuracy, row.disease_f1};
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) rows_j.push_back(r.to_json());
  return {{"mode", to_string(mode)}, {"threshold_t", threshold_t}, {"rows", rows_j}};
}

std::string EvalReport::to_text() const {
  const std::vector<std::string> head = {"Experiment", "SSIM Orig", "SSIM x2",  "Id Orig",
                                         "Id Gallery", "Id Target", "Id Overall", "Id MaxConf",
                                         "Dis Acc",    "Dis F1"};
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * *v << "%";
    return s.str();
  };
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& r : rows) {
    cells.push_back({to_string(r.experiment), pct(r.ssim_original), pct(r.ssim_generated_x2),
                     pct(r.id_acc_original), pct(r.id_acc_original_gallery),
                     pct(r.id_acc_target), pct(r.id_acc_overall), pct(r.id_max_confidence),
                     pct(r.disease_accuracy), pct(r.disease_f1)});
  }
  std::vector<size_t> width(head.size(), 0);
  for (const auto& row : cells) {
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : cells) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out << "  ";
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        out << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
    }
    out << '\n';
  }
  return out.str();
}

EvalOutput evaluate(ImageGenerator& generator, Recognizer& recognizer,
                    const std::vector<LabeledSample>& test,
                    const std::vector<LabeledSample>& gallery, const EvalOptions& options) {
  const auto pairs = make_eval_pairs(test, options.seed, options.max_pairs);
  EvalOutput out;
  out.report.mode = recognizer.mode();
  out.report.threshold_t = options.threshold_t;
  for (Experiment e : options.experiments) {
    auto records = run_experiment(generator, recognizer, pairs, gallery, e, options);
    out.report.rows.push_back(aggregate(records, options.threshold_t));
    out.records.insert(out.records.end(), records.begin(), records.end());
  }
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<SampleRecord>& records) {
  std::ofstream f(path);
  if (!f) throw Error("io", "cannot write " + path.string());
  for (const auto& r : records) f << r.to_json().dump() << '\n';
}

std::vector<SampleRecord> read_records(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("io", "cannot read " + path.string());
  std::vector<SampleRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty()) out.push_back(SampleRecord::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

void write_contact_sheet(const std::filesystem::path& path,
                         const std::vector<std::vector<torch::Tensor>>& rows) {
  if (rows.empty() || rows.front().empty()) throw ContractError("empty contact sheet");
  const auto& first = rows.front().front();
  const int64_t c = first.size(0), h = first.size(1), w = first.size(2);
  size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  constexpr int64_t pad = 2;
  auto canvas = torch::ones({c, static_cast<int64_t>(rows.size()) * (h + pad) + pad,
                             static_cast<int64_t>(cols) * (w + pad) + pad});
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[i].size(); ++j) {
      const auto& img = rows[i][j];
      if (img.dim() != 3 || img.size(0) != c || img.size(1) != h || img.size(2) != w) {
        throw ContractError("contact sheet cells must share one shape");
      }
      const int64_t y = pad + static_cast<int64_t>(i) * (h + pad);
      const int64_t x = pad + static_cast<int64_t>(j) * (w + pad);
      canvas.slice(1, y, y + h).slice(2, x, x + w).copy_(img.detach().to(torch::kFloat32));
    }
  }
  write_png(path, canvas);
}

void write_bundle_contact_sheet(const std::filesystem::path& path, NetworkBundle& bundle,
                                IdentityVae vae, const std::vector<EvalPair>& pairs, size_t n,
                                uint64_t seed) {
  n = std::min(n, pairs.size());
  if (n == 0) throw ContractError("no pairs for the contact sheet");
  BundleGenerator gen(bundle, vae);
  std::vector<const LabeledSample*> ori_s, tar_s;
  GenerationRequest req;
  req.seed = seed;
  for (size_t i = 0; i < n; ++i) {
    ori_s.push_back(pairs[i].original);
    tar_s.push_back(pairs[i].target);
    req.original_identity.push_back(pairs[i].original->identity);
  }
  req.original = stack_images(ori_s);
  req.target = stack_images(tar_s);
  std::vector<torch::Tensor> columns{req.original};
  std::vector<Experiment> exps{Experiment::kReconstruction, Experiment::kMedicalReplacement,
                               Experiment::kIdentityReplacement};
  if (vae) exps.push_back(Experiment::kAnonymization);
  for (Experiment e : exps) {
    req.experiment = e;
    columns.push_back(gen.generate(req));
  }
  std::vector<std::vector<torch::Tensor>> rows(n);
  for (size_t i = 0; i < n; ++i) {
    for (const auto& col : columns) rows[i].push_back(col[static_cast<int64_t>(i)]);
  }
  write_contact_sheet(path, rows);
}

}  // namespace disentangle
