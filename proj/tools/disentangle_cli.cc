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

// disentangle: dataset generation, training, anonymization, counterfactuals,
// evaluation and ablations.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid config.
// Failures print one line `error: <category>: <message>` to stderr.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "disentangle/anonymization.h"
#include "disentangle/checkpoint.h"
#include "disentangle/config.h"
#include "disentangle/datasets.h"
#include "disentangle/errors.h"
#include "disentangle/evaluation.h"
#include "disentangle/image_io.h"
#include "disentangle/training.h"
#include "json.hpp"

#ifndef DISENTANGLE_VERSION
#define DISENTANGLE_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace disentangle;

namespace {

// Flags shared by every command that takes a training configuration.
struct ConfigFlags {
  std::string preset;
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "named preset: chest, face or iris");
    cmd->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    for (const auto& k : train_config_keys()) {
      std::string dashed = k.name;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      std::string names = "--" + dashed;
      if (dashed != k.name) names += ",--" + k.name;
      options[k.name] = cmd->add_option(names, values[k.name], k.help)->group("Config keys");
    }
  }

  bool given(const std::string& key) const { return options.at(key)->count() > 0; }

  std::vector<std::pair<std::string, std::string>> overrides() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : train_config_keys()) {
      if (given(k.name)) out.emplace_back(k.name, values.at(k.name));
    }
    return out;
  }

  // Preset, file and flags on top of `base`.
  TrainConfig resolve(TrainConfig base = {}) const {
    if (!preset.empty()) apply_preset(base, preset);
    if (!file.empty()) {
      for (const auto& [k, v] : read_config_file(file)) apply_setting(base, k, v);
    }
    for (const auto& [k, v] : overrides()) apply_setting(base, k, v);
    base.validate();
    return base;
  }
};

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::object();
  std::string status = "ok";
  std::string error;
  double duration_s = 0.0;

  void write(const fs::path& run_dir) const {
    fs::create_directories(run_dir);
    const auto now = std::chrono::system_clock::now();
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    const std::string stem = command + "-" + std::to_string(ms) + "-" + std::to_string(getpid());
    json j = {{"command", command},   {"argv", argv},         {"config", config},
              {"seed", seed},         {"code_version", DISENTANGLE_VERSION},
              {"inputs", inputs},     {"outputs", outputs},   {"status", status},
              {"duration_s", duration_s}};
    if (!error.empty()) j["error"] = error;
    const fs::path tmp = run_dir / (stem + ".json.tmp");
    {
      std::ofstream f(tmp);
      f << j.dump(2) << '\n';
      if (!f) throw Error("io", "cannot write run manifest " + tmp.string());
    }
    fs::rename(tmp, run_dir / (stem + ".json"));
  }
};

std::vector<fs::path> list_pngs(const fs::path& input) {
  std::vector<fs::path> out;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
  } else if (fs::is_regular_file(input)) {
    out.push_back(input);
  }
  if (out.empty()) throw IngestionError("no PNG images at " + input.string());
  return out;
}

torch::Tensor load_for(const NetworkConfig& nc, const fs::path& path) {
  auto img = read_png(path);
  img = convert_channels(img, nc.channels);
  if (img.size(1) != nc.image_size || img.size(2) != nc.image_size) {
    img = resize_image(img, nc.image_size);
  }
  return img;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
  if (!f) throw Error("io", "cannot write " + path.string());
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v;
    if (!(is >> v)) throw ConfigError("bad list element '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const auto start = std::chrono::steady_clock::now();
  CLI::App app{"Identity/medical disentanglement, anonymization and counterfactuals"};
  app.require_subcommand(1);
  std::string run_dir = "runs";
  int threads = 1;
  app.add_option("--run-dir", run_dir, "where run manifests are written")->capture_default_str();
  bool shared_identities = false;
  app.add_flag("--shared-identities", shared_identities,
               "let one identity span several splits when the manifest has no split column");
  app.add_option("--threads", threads, "intra-op threads (1 = deterministic)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write the procedural factor dataset");
  FactorSpec spec;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  gen->add_option("--identities", spec.num_identities)->capture_default_str();
  gen->add_option("--classes", spec.num_classes)->capture_default_str();
  gen->add_option("--image-size", spec.image_size)->capture_default_str();
  gen->add_option("--channels", spec.channels)->capture_default_str();
  gen->add_option("--train", spec.train_samples, "training samples")->capture_default_str();
  gen->add_option("--validation", spec.validation_samples)->capture_default_str();
  gen->add_option("--test", spec.test_samples)->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "train the disentanglement network");
  ConfigFlags train_flags;
  std::string train_data, train_out, train_init;
  train->add_option("--data", train_data, "dataset directory (manifest.csv)")->required();
  train->add_option("--out", train_out, "checkpoint directory")->required();
  train->add_option("--init-from", train_init, "start from this checkpoint");
  train_flags.attach(train);

  // train-vae
  auto* tvae = app.add_subcommand("train-vae", "train the identity VAE on a frozen checkpoint");
  ConfigFlags vae_flags;
  std::string vae_ckpt, vae_data, vae_out;
  tvae->add_option("--checkpoint", vae_ckpt, "disentangler checkpoint")->required();
  tvae->add_option("--data", vae_data, "dataset directory")->required();
  tvae->add_option("--out", vae_out, "VAE checkpoint directory")->required();
  vae_flags.attach(tvae);

  // anonymize
  auto* anon = app.add_subcommand("anonymize", "replace identities of images");
  std::string an_ckpt, an_vae, an_input, an_out, an_method = "vae", an_donors;
  int an_k = 0;
  uint64_t an_seed = 0;
  anon->add_option("--checkpoint", an_ckpt)->required();
  anon->add_option("--vae", an_vae, "identity VAE checkpoint (method vae)");
  anon->add_option("--input", an_input, "PNG file or directory")->required();
  anon->add_option("--out", an_out, "output directory")->required();
  anon->add_option("--method", an_method)->check(CLI::IsMember({"vae", "avg"}))
      ->capture_default_str();
  anon->add_option("--k", an_k, "donor identities for avg (0 = all)")->capture_default_str();
  anon->add_option("--donors", an_donors, "dataset directory supplying donors (method avg)");
  anon->add_option("--seed", an_seed)->capture_default_str();

  // counterfactual
  auto* cf = app.add_subcommand("counterfactual", "swap in the medical features of a target");
  std::string cf_ckpt, cf_input, cf_target, cf_out;
  cf->add_option("--checkpoint", cf_ckpt)->required();
  cf->add_option("--input", cf_input, "original PNG")->required()->check(CLI::ExistingFile);
  cf->add_option("--target", cf_target, "target PNG")->required()->check(CLI::ExistingFile);
  cf->add_option("--out", cf_out, "output PNG")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "run the evaluation protocol on the test split");
  ConfigFlags ev_flags;
  std::string ev_ckpt, ev_vae, ev_data, ev_out, ev_exps, ev_anon = "vae";
  int ev_k = 0;
  size_t ev_max_pairs = 0;
  bool ev_external = false;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--vae", ev_vae, "identity VAE checkpoint");
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--experiments", ev_exps, "comma list of recon,med,id,anon");
  ev->add_option("--out", ev_out, "report JSON path")->required();
  ev->add_option("--anon-method", ev_anon)->check(CLI::IsMember({"vae", "avg"}))
      ->capture_default_str();
  ev->add_option("--k", ev_k, "donor identities for avg (0 = all)")->capture_default_str();
  ev->add_option("--max-pairs", ev_max_pairs, "cap on evaluated pairs (0 = all)");
  ev->add_flag("--external-evaluator", ev_external,
               "grade with classifiers trained on the validation split");
  ev_flags.attach(ev);

  // ablate
  auto* ab = app.add_subcommand("ablate", "realism or dataset-size ablation");
  ConfigFlags ab_flags;
  std::string ab_kind, ab_data, ab_out, ab_variants, ab_sizes;
  ab->add_option("kind", ab_kind, "realism or datasize")
      ->required()
      ->check(CLI::IsMember({"realism", "datasize"}));
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--variants", ab_variants, "comma list (default: all six)");
  ab->add_option("--sizes", ab_sizes, "comma list of training set sizes");
  ab_flags.attach(ab);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  torch::set_num_threads(threads);
  RunManifest manifest;
  manifest.argv.assign(argv, argv + argc);
  int code = 0;
  try {
    if (*gen) {
      manifest.command = "gen-data";
      manifest.seed = spec.seed;
      spec.validate();
      write_dataset(generate_synthetic(spec), gen_out);
      manifest.outputs["dataset"] = gen_out;
    } else if (*train) {
      manifest.command = "train";
      TrainConfig cfg = train_flags.resolve();
      cfg.checkpoint_dir = train_out;
      if (!train_flags.given("log_path")) cfg.log_path = (fs::path(train_out) / "loss.jsonl").string();
      fs::create_directories(train_out);
      manifest.seed = cfg.seed;
      manifest.inputs["data"] = train_data;
      const DatasetSplit data = load_dataset_dir(train_data, cfg.mode, cfg.seed,
                                                 !shared_identities);
      std::optional<NetworkBundle> init;
      if (!train_init.empty()) {
        init = load_bundle(train_init);
        manifest.inputs["init"] = train_init;
      }
      manifest.config = cfg.to_json();
      const TrainResult r = train_disentangler(data, cfg, init);
      json val = json::array();
      for (const auto& v : r.validations) {
        val.push_back({{"epoch", v.epoch},
                       {"ssim", v.ssim},
                       {"identity_accuracy", v.identity_accuracy},
                       {"disease_accuracy", v.disease_accuracy},
                       {"composite", v.composite}});
      }
      std::ofstream(fs::path(train_out) / "validation.json") << val.dump(2) << '\n';
      manifest.outputs = {{"checkpoint", train_out},
                          {"loss_log", cfg.log_path},
                          {"best_epoch", r.info.epoch},
                          {"parameter_hash", r.info.parameter_hash}};
      std::cout << "best epoch " << r.info.epoch << " composite " << r.info.metric << "\n";
    } else if (*tvae) {
      manifest.command = "train-vae";
      CheckpointInfo info;
      NetworkBundle bundle = load_bundle(vae_ckpt, &info);
      TrainConfig cfg = vae_flags.resolve(train_config_from_json(info.config));
      if (cfg.mode != bundle.config.mode) throw ConfigError("mode differs from the checkpoint's");
      manifest.seed = cfg.seed;
      manifest.config = cfg.to_json();
      manifest.inputs = {{"checkpoint", vae_ckpt}, {"data", vae_data}};
      const DatasetSplit data = load_dataset_dir(vae_data, cfg.mode, cfg.seed, !shared_identities);
      const VaeResult r = train_identity_vae(bundle, data, cfg, vae_out);
      std::ofstream lf(fs::path(vae_out) / "loss.jsonl");
      for (const auto& p : r.log) lf << p.to_json().dump() << '\n';
      manifest.outputs = {{"vae", vae_out}, {"best_epoch", r.info.epoch}};
      std::cout << "best epoch " << r.info.epoch << " validation loss " << r.info.metric << "\n";
    } else if (*anon) {
      manifest.command = "anonymize";
      manifest.seed = an_seed;
      NetworkBundle bundle = load_bundle(an_ckpt);
      const auto& nc = bundle.config;
      IdentityVae vae{nullptr};
      DatasetSplit donors;
      if (an_method == "vae") {
        if (an_vae.empty()) throw ConfigError("--vae is required for method vae");
        vae = load_vae(an_vae);
      } else {
        if (an_donors.empty()) throw ConfigError("--donors is required for method avg");
        donors = load_dataset_dir(an_donors, nc.mode, an_seed, !shared_identities);
      }
      manifest.inputs = {{"checkpoint", an_ckpt}, {"input", an_input}};
      fs::create_directories(an_out);
      size_t i = 0;
      for (const auto& path : list_pngs(an_input)) {
        const auto img = load_for(nc, path);
        const uint64_t seed = an_seed + i++;
        AnonymizationResult r;
        if (an_method == "vae") {
          r = anonymize(bundle, vae, img, seed);
        } else {
          int identity = -1;
          for (const auto& s : donors.train) {
            if (s.name == path.stem().string()) identity = s.identity;
          }
          std::mt19937_64 rng(seed);
          r = average_identities(bundle, img,
                                 stack_images(select_donors(donors.train, identity, an_k, rng)));
          r.seed = seed;
        }
        torch::NoGradGuard no_grad;
        const auto z_gen = encode(bundle.encoder, nc, r.image).z_id;
        const double dist = siamese_distance(r.source_latents.z_id, z_gen).item<double>();
        const fs::path out_png = fs::path(an_out) / (path.stem().string() + ".png");
        write_png(out_png, r.image[0]);
        json side = {{"method", an_method == "vae" ? "vae" : "average_k"},
                     {"seed", seed},
                     {"siamese_distance_to_original", dist}};
        if (an_method == "avg") side["k"] = an_k;
        write_text(fs::path(an_out) / (path.stem().string() + ".json"), side.dump(2) + "\n");
      }
      manifest.outputs["images"] = an_out;
    } else if (*cf) {
      manifest.command = "counterfactual";
      NetworkBundle bundle = load_bundle(cf_ckpt);
      const auto r = counterfactual(bundle, load_for(bundle.config, cf_input),
                                    load_for(bundle.config, cf_target));
      if (fs::path(cf_out).has_parent_path()) fs::create_directories(fs::path(cf_out).parent_path());
      write_png(cf_out, r.image[0]);
      manifest.inputs = {{"checkpoint", cf_ckpt}, {"input", cf_input}, {"target", cf_target}};
      manifest.outputs["image"] = cf_out;
    } else if (*ev) {
      manifest.command = "evaluate";
      CheckpointInfo info;
      NetworkBundle bundle = load_bundle(ev_ckpt, &info);
      TrainConfig cfg = ev_flags.resolve(train_config_from_json(info.config));
      manifest.seed = cfg.seed;
      manifest.config = cfg.to_json();
      manifest.inputs = {{"checkpoint", ev_ckpt}, {"data", ev_data}};
      const DatasetSplit data = load_dataset_dir(ev_data, bundle.config.mode, cfg.seed,
                                                 !shared_identities);
      IdentityVae vae{nullptr};
      if (!ev_vae.empty()) {
        vae = load_vae(ev_vae);
        manifest.inputs["vae"] = ev_vae;
      }
      EvalOptions opts;
      opts.threshold_t = cfg.weights.threshold_t;
      opts.seed = cfg.seed;
      opts.max_pairs = ev_max_pairs;
      opts.metrics = cfg.metrics;
      if (!ev_exps.empty()) {
        opts.experiments = parse_experiments(ev_exps);
      } else if (vae || ev_anon == "avg") {
        opts.experiments.push_back(Experiment::kAnonymization);
      }
      AnonymizerSpec aspec;
      aspec.method = ev_anon == "avg" ? AnonymizationMethod::kAverage : AnonymizationMethod::kVae;
      aspec.k = ev_k;
      BundleGenerator generator(bundle, vae, &data.train, aspec);
      std::optional<NetworkBundle> external;
      if (ev_external) external = train_external_evaluator(data, cfg);
      BundleRecognizer recognizer(external ? *external : bundle);
      const EvalOutput out = evaluate(generator, recognizer, data.test, data.train, opts);
      const fs::path report_path = ev_out;
      if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
      json report = out.report.to_json();
      report["external_evaluator"] = ev_external;
      write_text(report_path, report.dump(2) + "\n");
      fs::path records_path = report_path, text_path = report_path, sheet_path = report_path;
      records_path.replace_extension(".records.jsonl");
      text_path.replace_extension(".txt");
      sheet_path.replace_extension(".png");
      write_records(records_path, out.records);
      const std::string table = out.report.to_text();
      write_text(text_path, table);
      write_bundle_contact_sheet(sheet_path, bundle, vae,
                                 make_eval_pairs(data.test, opts.seed, opts.max_pairs), 8,
                                 opts.seed);
      std::cout << table;
      manifest.outputs = {{"report", report_path.string()},
                          {"records", records_path.string()},
                          {"table", text_path.string()},
                          {"contact_sheet", sheet_path.string()}};
    } else if (*ab) {
      manifest.command = "ablate";
      TrainConfig cfg = ab_flags.resolve();
      cfg.checkpoint_dir = ab_out;
      manifest.seed = cfg.seed;
      manifest.config = cfg.to_json();
      manifest.inputs["data"] = ab_data;
      const DatasetSplit data = load_dataset_dir(ab_data, cfg.mode, cfg.seed, !shared_identities);
      fs::create_directories(ab_out);
      AblationTable table;
      if (ab_kind == "realism") {
        std::vector<std::string> variants = realism_variants();
        if (!ab_variants.empty()) variants = parse_list<std::string>(ab_variants);
        table = run_ablation_realism(data, cfg, variants);
      } else {
        std::vector<size_t> sizes{data.train.size() / 2, data.train.size()};
        if (!ab_sizes.empty()) sizes = parse_list<size_t>(ab_sizes);
        table = run_ablation_datasize(data, cfg, sizes);
      }
      write_text(fs::path(ab_out) / "table.json", table.to_json().dump(2) + "\n");
      write_text(fs::path(ab_out) / "table.txt", table.to_text());
      std::cout << table.to_text();
      manifest.outputs = {{"table", (fs::path(ab_out) / "table.json").string()}};
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    manifest.status = "error";
    manifest.error = e.category() + ": " + e.what();
    code = dynamic_cast<const ConfigError*>(&e) != nullptr ? 3 : 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    msg = msg.substr(0, msg.find('\n'));
    std::cerr << "error: runtime: " << msg << "\n";
    manifest.status = "error";
    manifest.error = "runtime: " + msg;
    code = 1;
  }
  manifest.duration_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    manifest.write(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    if (code == 0) code = 1;
  }
  return code;
}
