// SPDX-License-Identifier: Apache-2.0
//
// Stage orchestration over an artifact directory:
//
//   <out>/prepare/windows.advw              all subjects, raw scale
//   <out>/<task>/fold<k>/fold.json         split and min-max statistics
//   <out>/<task>/fold<k>/pairs.jsonl, validation_pairs.jsonl
//   <out>/<task>/fold<k>/{train,validation,test}.advw   with materialize_folds
//   <out>/<task>/fold<k>/repeat<r>/{model.advc, train_log.jsonl, result.json}
//   <out>/<task>/{report.json, report.csv, boxplot.json}
//
// Each stage directory holds a stamp.json naming the digest of the stage's
// inputs and of every file it wrote. A stage whose stamp matches is skipped;
// a stage that fails removes what it had written.
#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "advhar/config.hpp"
#include "advhar/eval.hpp"

namespace advhar {

enum class ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfig = 2,
  kData = 3,
  kTrainingAbort = 4,
  kIo = 5,
};

/// Maps a library exception onto the process exit code.
ExitCode exit_code_for(const std::exception& error);

/// Raw files (or the synthetic generator when no raw directory is set).
LabeledDataset load_experiment_dataset(const ExperimentConfig& config);

struct PipelineOptions {
  bool train = true;
  bool report = true;
  /// Also write normalized per-fold windows files.
  bool materialize_folds = false;
  std::ostream* progress = nullptr;
};

struct PipelineResult {
  std::filesystem::path task_dir;
  std::optional<MetricsReport> report;
  std::size_t stages_run = 0;
  std::size_t stages_skipped = 0;
};

/// prepare -> per-fold windows and pairs -> per-(fold, repeat) training ->
/// aggregate report, for config.task.
PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options = {});

/// Every report.json below `dir`, ordered by path.
std::vector<MetricsReport> collect_reports(const std::filesystem::path& dir);

/// Writes raw synthetic recordings to <dir>/raw and a config naming them to
/// <dir>/config.json. Returns the config path.
std::filesystem::path write_synthetic_experiment(const std::filesystem::path& dir, const SyntheticSpec& spec);

}  // namespace advhar
