// SPDX-License-Identifier: Apache-2.0
#include "advhar/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "advhar/digest.hpp"
#include "advhar/error.hpp"
#include "json.hpp"

extern char** environ;

namespace advhar {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 4> kBlockKeys = {"feature", "reconstructor", "classifier", "discriminator"};

json step_json(const StepSchedule& s) {
  json lr = json::object();
  for (std::size_t b = 0; b < kBlockKeys.size(); ++b) lr[kBlockKeys[b]] = s.learning_rate[b];
  return {{"epochs", s.epochs}, {"learning_rate", lr}};
}

json to_json(const ExperimentConfig& c) {
  json folds = json::array();
  for (std::size_t f : c.folds) folds.push_back(f);
  const TrainingConfig& t = c.training;
  return {
      {"version", c.version},
      {"dataset", to_string(c.dataset)},
      {"schema_catalog", c.schema_catalog.string()},
      {"paths", {{"raw", c.raw_dir.string()}, {"out", c.out_dir.string()}}},
      {"seed", c.seed},
      {"task", to_string(c.task)},
      {"repeats", c.repeats},
      {"folds", folds},
      {"jobs", c.jobs},
      {"pairs", {{"size", c.pair_size}, {"validation_size", c.validation_pair_size}}},
      {"training",
       {{"step1", step_json(t.step1)},
        {"step2", step_json(t.step2)},
        {"step3", step_json(t.step3)},
        {"batch_size_a", t.batch_size_a},
        {"batch_size_pairs", t.batch_size_pairs},
        {"weights",
         {{"adversarial", t.weights.adversarial},
          {"reconstruction", t.weights.reconstruction},
          {"classification", t.weights.classification}}},
        {"clip_grad_norm", t.clip_grad_norm ? json(*t.clip_grad_norm) : json(nullptr)}}},
      {"synthetic",
       {{"n_subjects", c.synthetic.n_subjects},
        {"n_activities", c.synthetic.n_activities},
        {"windows_per_cell", c.synthetic.windows_per_cell},
        {"window", c.synthetic.window},
        {"channels", c.synthetic.channels},
        {"subject_variability", c.synthetic.subject_variability},
        {"noise_sigma", c.synthetic.noise_sigma},
        {"seed", c.synthetic.seed}}},
  };
}

// Overlays `user` onto `base`. Every user key must exist in the base; the
// only nullable key takes any number.
void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + here + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, here);
    } else {
      slot = value;
    }
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

void apply_env(json& doc, const EnvMap& env) {
  for (const auto& [name, raw] : env) {
    if (name.rfind(kEnvPrefix, 0) != 0) continue;
    std::string rest = lower(name.substr(kEnvPrefix.size()));
    std::vector<std::string> parts;
    for (std::size_t pos = 0;;) {
      const std::size_t next = rest.find("__", pos);
      parts.push_back(rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
      if (next == std::string::npos) break;
      pos = next + 2;
    }
    json* node = &doc;
    std::string path;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      path += (i ? "." : "") + parts[i];
      if (!node->is_object() || !node->contains(parts[i])) {
        throw ConfigError("environment override " + name + ": unknown key '" + path + "'");
      }
      node = &(*node)[parts[i]];
    }
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    if (node->is_object()) throw ConfigError("environment override " + name + " targets a section");
    *node = value;
  }
}

const json& at(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError("config: missing '" + path + key + "'");
  return j.at(key);
}

std::size_t get_count(const json& j, const char* key, const std::string& path) {
  const json& v = at(j, key, path);
  if (!v.is_number_unsigned()) throw ConfigError("config: '" + path + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

double get_real(const json& j, const char* key, const std::string& path) {
  const json& v = at(j, key, path);
  if (!v.is_number()) throw ConfigError("config: '" + path + key + "' must be a number");
  return v.get<double>();
}

std::string get_text(const json& j, const char* key, const std::string& path) {
  const json& v = at(j, key, path);
  if (!v.is_string()) throw ConfigError("config: '" + path + key + "' must be a string");
  return v.get<std::string>();
}

StepSchedule step_from(const json& j, const std::string& path) {
  StepSchedule s;
  s.epochs = get_count(j, "epochs", path);
  const json& lr = at(j, "learning_rate", path);
  for (std::size_t b = 0; b < kBlockKeys.size(); ++b) {
    s.learning_rate[b] = get_real(lr, kBlockKeys[b], path + "learning_rate.");
  }
  return s;
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  const json& version = at(j, "version", "");
  if (!version.is_number_integer() || version.get<int>() != kConfigVersion) {
    throw ConfigError("config: unsupported version " + version.dump() + " (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  c.dataset = parse_dataset_kind(get_text(j, "dataset", ""));
  c.schema_catalog = get_text(j, "schema_catalog", "");
  const json& paths = at(j, "paths", "");
  c.raw_dir = get_text(paths, "raw", "paths.");
  c.out_dir = get_text(paths, "out", "paths.");
  const json& seed = at(j, "seed", "");
  if (!seed.is_number_unsigned()) throw ConfigError("config: 'seed' must be a non-negative integer");
  c.seed = seed.get<std::uint64_t>();
  c.task = parse_ablation_task(get_text(j, "task", ""));
  c.repeats = get_count(j, "repeats", "");
  const json& folds = at(j, "folds", "");
  if (!folds.is_array()) throw ConfigError("config: 'folds' must be an array");
  for (const json& f : folds) {
    if (!f.is_number_unsigned()) throw ConfigError("config: 'folds' entries must be non-negative integers");
    c.folds.push_back(f.get<std::size_t>());
  }
  c.jobs = get_count(j, "jobs", "");
  const json& pairs = at(j, "pairs", "");
  c.pair_size = get_count(pairs, "size", "pairs.");
  c.validation_pair_size = get_count(pairs, "validation_size", "pairs.");

  const json& t = at(j, "training", "");
  c.training.step1 = step_from(at(t, "step1", "training."), "training.step1.");
  c.training.step2 = step_from(at(t, "step2", "training."), "training.step2.");
  c.training.step3 = step_from(at(t, "step3", "training."), "training.step3.");
  c.training.batch_size_a = get_count(t, "batch_size_a", "training.");
  c.training.batch_size_pairs = get_count(t, "batch_size_pairs", "training.");
  const json& w = at(t, "weights", "training.");
  c.training.weights.adversarial = get_real(w, "adversarial", "training.weights.");
  c.training.weights.reconstruction = get_real(w, "reconstruction", "training.weights.");
  c.training.weights.classification = get_real(w, "classification", "training.weights.");
  const json& clip = at(t, "clip_grad_norm", "training.");
  if (!clip.is_null()) {
    if (!clip.is_number()) throw ConfigError("config: 'training.clip_grad_norm' must be a number or null");
    c.training.clip_grad_norm = clip.get<double>();
  }
  c.training.seed = c.seed;

  const json& s = at(j, "synthetic", "");
  c.synthetic.n_subjects = get_count(s, "n_subjects", "synthetic.");
  c.synthetic.n_activities = get_count(s, "n_activities", "synthetic.");
  c.synthetic.windows_per_cell = get_count(s, "windows_per_cell", "synthetic.");
  c.synthetic.window = get_count(s, "window", "synthetic.");
  c.synthetic.channels = get_count(s, "channels", "synthetic.");
  c.synthetic.subject_variability = get_real(s, "subject_variability", "synthetic.");
  c.synthetic.noise_sigma = get_real(s, "noise_sigma", "synthetic.");
  const json& sseed = at(s, "seed", "synthetic.");
  if (!sseed.is_number_unsigned()) throw ConfigError("config: 'synthetic.seed' must be a non-negative integer");
  c.synthetic.seed = sseed.get<std::uint64_t>();
  return c;
}

}  // namespace

DatasetSchema ExperimentConfig::schema() const {
  if (dataset == DatasetKind::kSynthetic) return synthetic_schema(synthetic);
  if (!schema_catalog.empty()) return load_schema(schema_catalog, dataset);
  return builtin_schema(dataset);
}

void ExperimentConfig::validate() const {
  if (version != kConfigVersion) throw ConfigError("config: unsupported version " + std::to_string(version));
  if (repeats == 0) throw ConfigError("config: repeats must be at least 1");
  if (jobs == 0) throw ConfigError("config: jobs must be at least 1");
  if (task != AblationTask::kIdentity && pair_size < 2) throw ConfigError("config: pairs.size must be at least 2");
  if (training.batch_size_a == 0 || training.batch_size_pairs == 0) {
    throw ConfigError("config: batch sizes must be positive");
  }
  for (const StepSchedule* s : {&training.step1, &training.step2, &training.step3}) {
    for (double r : s->learning_rate) {
      if (!(r >= 0.0)) throw ConfigError("config: learning rates must be non-negative");
    }
  }
  const loss::LossWeights& w = training.weights;
  if (!(w.adversarial >= 0.0) || !(w.reconstruction >= 0.0) || !(w.classification >= 0.0)) {
    throw ConfigError("config: loss weights must be non-negative");
  }
  if (training.clip_grad_norm && !(*training.clip_grad_norm > 0.0)) {
    throw ConfigError("config: clip_grad_norm must be positive");
  }
  if (dataset == DatasetKind::kSynthetic) synthetic.validate();
  if (dataset != DatasetKind::kSynthetic && raw_dir.empty()) {
    throw ConfigError("config: paths.raw is required for " + to_string(dataset));
  }
  schema().validate();
}

ExperimentConfig default_config(DatasetKind dataset) {
  ExperimentConfig c;
  c.dataset = dataset;
  const DatasetSchema schema = c.schema();
  c.training = TrainingConfig::for_schema(schema);
  c.pair_size = schema.pair_size;
  return c;
}

EnvMap environment_overrides() {
  EnvMap env;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    const std::size_t eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string_view name = entry.substr(0, eq);
    if (name.rfind(kEnvPrefix, 0) == 0) env.emplace(name, entry.substr(eq + 1));
  }
  return env;
}

ExperimentConfig config_from_json(std::string_view text, const EnvMap& env) {
  const json user = json::parse(text, nullptr, false);
  if (user.is_discarded()) throw ConfigError("config: not valid JSON");
  if (!user.is_object()) throw ConfigError("config: top level must be an object");

  std::string dataset_name;
  if (auto it = env.find(std::string(kEnvPrefix) + "DATASET"); it != env.end()) {
    dataset_name = it->second;
  } else if (user.contains("dataset") && user["dataset"].is_string()) {
    dataset_name = user["dataset"].get<std::string>();
  } else {
    throw ConfigError("config: 'dataset' is required");
  }
  json doc = to_json(default_config(parse_dataset_kind(dataset_name)));
  merge(doc, user, "");
  apply_env(doc, env);
  ExperimentConfig c = from_json(doc);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file, const EnvMap& env) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), env);
}

std::string config_to_json(const ExperimentConfig& config) { return to_json(config).dump(2); }

std::string config_digest(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("jobs");
  j.erase("paths");
  if (config.dataset != DatasetKind::kSynthetic) j.erase("synthetic");
  return Digest().update(j.dump()).hex();
}

}  // namespace advhar
