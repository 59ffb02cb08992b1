// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a JSON document where every key except the
// dataset has a default, so a minimal file names only the dataset and its
// paths. Keys can be overridden through ADVHAR_<PATH> environment variables,
// with "__" separating nesting levels (ADVHAR_TRAINING__STEP3__EPOCHS=30).
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "advhar/eval.hpp"
#include "advhar/ingest.hpp"
#include "advhar/synthetic.hpp"
#include "advhar/trainer.hpp"

namespace advhar {

inline constexpr int kConfigVersion = 1;
inline constexpr std::string_view kEnvPrefix = "ADVHAR_";

struct ExperimentConfig {
  int version = kConfigVersion;
  DatasetKind dataset = DatasetKind::kSynthetic;
  /// Catalog file replacing the built-in dataset schemas; empty = built-in.
  std::filesystem::path schema_catalog;
  std::filesystem::path raw_dir;  // empty with SYNTHETIC = generate in memory
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  AblationTask task = AblationTask::kOurs;
  std::size_t repeats = 2;
  std::vector<std::size_t> folds;  // empty = all
  std::size_t jobs = 1;
  std::size_t pair_size = 0;
  std::size_t validation_pair_size = 1000;
  TrainingConfig training;
  SyntheticSpec synthetic;

  /// Dataset schema the experiment runs on (synthetic spec applied).
  DatasetSchema schema() const;
  void validate() const;
};

/// Defaults for a dataset: batch and pair sizes from its schema, the rest
/// from the training defaults.
ExperimentConfig default_config(DatasetKind dataset);

using EnvMap = std::map<std::string, std::string>;
/// ADVHAR_* variables of the current process.
EnvMap environment_overrides();

/// Parses and validates. Unknown keys, wrong types and unsupported versions
/// raise ConfigError.
ExperimentConfig config_from_json(std::string_view text, const EnvMap& env = {});
ExperimentConfig load_config(const std::filesystem::path& file, const EnvMap& env = {});

/// Full serialization, every key present.
std::string config_to_json(const ExperimentConfig& config);

/// Digest of the settings that determine results (paths and jobs excluded).
std::string config_digest(const ExperimentConfig& config);

}  // namespace advhar
