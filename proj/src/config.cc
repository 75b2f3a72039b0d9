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

#include <cmath>
#include <cstdio>
#include <fstream>

#include "disentangle/errors.h"

namespace disentangle {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long parse_integer(const std::string& key, const std::string& v) {
  size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  const long long x = parse_integer(key, v);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(key + ": value out of range");
  return static_cast<int>(x);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
std::string fmt(bool v) { return v ? "true" : "false"; }

#define DOUBLE_KEY(NAME, FIELD, HELP)                                                     \
  ConfigKey {                                                                             \
    NAME, HELP, [](TrainConfig& c, const std::string& v) { c.FIELD = parse_double(NAME, v); }, \
        [](const TrainConfig& c) { return fmt(c.FIELD); }                                 \
  }
#define INT_KEY(NAME, FIELD, HELP)                                                        \
  ConfigKey {                                                                             \
    NAME, HELP, [](TrainConfig& c, const std::string& v) { c.FIELD = parse_int(NAME, v); }, \
        [](const TrainConfig& c) { return std::to_string(c.FIELD); }                      \
  }
#define BOOL_KEY(NAME, FIELD, HELP)                                                       \
  ConfigKey {                                                                             \
    NAME, HELP, [](TrainConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); }, \
        [](const TrainConfig& c) { return fmt(c.FIELD); }                                 \
  }
#define STRING_KEY(NAME, FIELD, HELP)                                                     \
  ConfigKey {                                                                             \
    NAME, HELP, [](TrainConfig& c, const std::string& v) { c.FIELD = v; },                \
        [](const TrainConfig& c) { return c.FIELD; }                                      \
  }

std::vector<ConfigKey> make_keys() {
  return {
      ConfigKey{"mode", "identity head: multiclass or siamese",
                [](TrainConfig& c, const std::string& v) {
                  c.mode = identity_mode_from_string(v);
                  c.network.mode = c.mode;
                },
                [](const TrainConfig& c) { return to_string(c.mode); }},
      INT_KEY("epochs", epochs, "disentangler training epochs"),
      INT_KEY("batch_size", batch_size, "triplets per optimization step"),
      DOUBLE_KEY("learning_rate", learning_rate, "Adam step size"),
      DOUBLE_KEY("beta1", beta1, "Adam first-moment decay"),
      DOUBLE_KEY("beta2", beta2, "Adam second-moment decay"),
      DOUBLE_KEY("lambda_med", weights.lambda_med, "weight of the disease term"),
      DOUBLE_KEY("lambda_id", weights.lambda_id, "weight of the identity term"),
      DOUBLE_KEY("lambda_r", weights.lambda_r, "weight of the realism loss"),
      DOUBLE_KEY("lambda_d", weights.lambda_d, "weight of the disentanglement loss"),
      ConfigKey{"alpha", "PSNR normaliser and cap (dB)",
                [](TrainConfig& c, const std::string& v) {
                  c.weights.alpha = parse_double("alpha", v);
                  c.metrics.psnr_cap = c.weights.alpha;
                },
                [](const TrainConfig& c) { return fmt(c.weights.alpha); }},
      DOUBLE_KEY("margin", weights.margin, "siamese hinge margin"),
      DOUBLE_KEY("threshold_t", weights.threshold_t, "same-identity distance threshold"),
      ConfigKey{"seed", "seed for initialization, sampling and augmentation",
                [](TrainConfig& c, const std::string& v) {
                  c.seed = parse_u64("seed", v);
                  c.network.seed = c.seed;
                },
                [](const TrainConfig& c) { return std::to_string(c.seed); }},
      DOUBLE_KEY("crop_fraction", augmentation.crop_fraction, "retained crop side fraction"),
      DOUBLE_KEY("crop_probability", augmentation.crop_probability, "probability of a crop"),
      DOUBLE_KEY("brightness_delta", augmentation.brightness_delta, "max brightness shift"),
      DOUBLE_KEY("brightness_probability", augmentation.brightness_probability,
                 "probability of a brightness shift"),
      DOUBLE_KEY("flip_probability", augmentation.flip_probability,
                 "probability of a horizontal flip"),
      BOOL_KEY("augment_discriminator", augment_discriminator,
               "augment discriminator inputs"),
      BOOL_KEY("use_adversarial", realism.adversarial, "adversarial realism term"),
      BOOL_KEY("use_ssim", realism.ssim, "SSIM realism term"),
      BOOL_KEY("use_psnr", realism.psnr, "PSNR realism term"),
      INT_KEY("validation_every", validation_every, "epochs between validations"),
      STRING_KEY("checkpoint_dir", checkpoint_dir, "where the best checkpoint is written"),
      STRING_KEY("log_path", log_path, "JSON-lines loss log"),
      BOOL_KEY("freeze_classifiers", freeze_classifiers,
               "keep the classifier heads fixed"),
      INT_KEY("image_size", network.image_size, "image side in pixels"),
      INT_KEY("channels", network.channels, "image channels (1 or 3)"),
      INT_KEY("d_id", network.d_id, "identity latent size"),
      INT_KEY("d_med", network.d_med, "medical latent size"),
      INT_KEY("d_rest", network.d_rest, "residual latent size"),
      INT_KEY("stages", network.stages, "down/upsampling stages"),
      INT_KEY("base_width", network.base_width, "stem channel count"),
      INT_KEY("hidden", network.hidden, "classifier hidden units"),
      DOUBLE_KEY("dropout", network.dropout, "dropout rate of the perceptrons"),
      STRING_KEY("init", network.init, "initialization scheme"),
      INT_KEY("vae_latent", network.vae_latent, "identity VAE latent size"),
      INT_KEY("vae_hidden", network.vae_hidden, "identity VAE hidden units"),
      INT_KEY("vae_epochs", vae_epochs, "identity VAE training epochs"),
      INT_KEY("vae_batch_size", vae_batch_size, "identity VAE batch size"),
      DOUBLE_KEY("vae_learning_rate", vae_learning_rate, "identity VAE Adam step size"),
      BOOL_KEY("vae_privacy_term", vae_privacy_term,
               "entropy / hinge privacy term of the VAE loss"),
      INT_KEY("ssim_window", metrics.ssim_window, "SSIM window side"),
      DOUBLE_KEY("ssim_sigma", metrics.ssim_sigma, "SSIM Gaussian sigma"),
      DOUBLE_KEY("ssim_k1", metrics.ssim_k1, "SSIM stabilizer k1"),
      DOUBLE_KEY("ssim_k2", metrics.ssim_k2, "SSIM stabilizer k2"),
  };
}

#undef DOUBLE_KEY
#undef INT_KEY
#undef BOOL_KEY
#undef STRING_KEY

}  // namespace

void AugmentationConfig::validate() const {
  for (double p : {crop_probability, brightness_probability, flip_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must be in [0, 1]");
  }
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) {
    throw ConfigError("crop_fraction must be in (0, 1]");
  }
  if (!(brightness_delta >= 0.0 && brightness_delta <= 1.0)) {
    throw ConfigError("brightness_delta must be in [0, 1]");
  }
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be > 0");
  }
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("Adam betas must be in [0, 1)");
  }
  if (validation_every <= 0) throw ConfigError("validation_every must be positive");
  if (vae_epochs < 0) throw ConfigError("vae_epochs must be >= 0");
  if (vae_batch_size <= 0) throw ConfigError("vae_batch_size must be positive");
  if (!(vae_learning_rate > 0)) throw ConfigError("vae_learning_rate must be > 0");
  if (metrics.psnr_cap != weights.alpha) {
    throw ConfigError("metrics.psnr_cap must equal alpha");
  }
  weights.validate();
  augmentation.validate();
  metrics.validate();
  network.validate();
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : train_config_keys()) j[k.name] = k.get(*this);
  j["num_identities"] = std::to_string(network.num_identities);
  j["num_classes"] = std::to_string(network.num_classes);
  return j;
}

std::string TrainConfig::hash() const { return fnv1a_hex(to_json().dump()); }

const std::vector<ConfigKey>& train_config_keys() {
  static const std::vector<ConfigKey> keys = make_keys();
  return keys;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : train_config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  if (key == "num_identities") {
    cfg.network.num_identities = parse_int(key, value);
    return;
  }
  if (key == "num_classes") {
    cfg.network.num_classes = parse_int(key, value);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    apply_setting(cfg, key, value.is_string() ? value.get<std::string>() : value.dump());
  }
  return cfg;
}

std::vector<std::string> preset_names() { return {"chest", "face", "iris"}; }

void apply_preset(TrainConfig& cfg, const std::string& name) {
  auto set = [&cfg](IdentityMode mode, double med, double id, double r, double d, int epochs,
                    int vae_epochs) {
    cfg.mode = mode;
    cfg.network.mode = mode;
    cfg.weights.lambda_med = med;
    cfg.weights.lambda_id = id;
    cfg.weights.lambda_r = r;
    cfg.weights.lambda_d = d;
    cfg.weights.alpha = 48.0;
    cfg.metrics.psnr_cap = 48.0;
    cfg.learning_rate = 2e-5;
    cfg.epochs = epochs;
    cfg.vae_epochs = vae_epochs;
  };
  if (name == "chest") {
    set(IdentityMode::kSiamese, 5.0, 5.0, 1.0, 5.0, 1551, 223);
    // Laterality matters on radiographs.
    cfg.augmentation.flip_probability = 0.0;
  } else if (name == "face") {
    set(IdentityMode::kSiamese, 0.5, 10.0, 0.02, 10.0, 1644, 135);
  } else if (name == "iris") {
    set(IdentityMode::kMulticlass, 1.0, 1.0, 0.1, 5.0, 4635, 803);
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected chest, face or iris)");
  }
}

std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    for (auto& ch : key) {
      if (ch == '-') ch = '_';
    }
    out.emplace_back(key, value);
  }
  return out;
}

TrainConfig resolve_config(const std::string& preset, const std::filesystem::path& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig cfg;
  if (!preset.empty()) apply_preset(cfg, preset);
  if (!file.empty()) {
    for (const auto& [k, v] : read_config_file(file)) apply_setting(cfg, k, v);
  }
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  return cfg;
}

std::string fnv1a_hex(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace disentangle
