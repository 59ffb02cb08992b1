// SPDX-License-Identifier: Apache-2.0
//
// Leave-one-subject-out evaluation: fold construction, per-fold training
// and testing, aggregation over folds and repeats, and the discriminator
// ablation arms.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advhar/ingest.hpp"
#include "advhar/metrics.hpp"
#include "advhar/model.hpp"
#include "advhar/pairset.hpp"
#include "advhar/trainer.hpp"

namespace advhar {

struct FoldSplit {
  int test_subject = 0;
  std::array<int, 2> validation_subjects{};
  std::vector<int> training_subjects;
};

/// One fold per subject in the given order; the two subjects following the
/// test subject (cyclically) validate and the rest train. Needs >= 4 subjects.
std::vector<FoldSplit> loocv_splits(std::span<const int> subjects);

/// Testing-phase confusion matrix: feature extractor and classifier only.
ConfusionMatrix evaluate(const InferenceModel& model, const LabeledDataset& test);

enum class AblationTask { kOurs, kIdentity, kAgnostic };
std::string to_string(AblationTask task);
AblationTask parse_ablation_task(std::string_view text);  // "ours" | "di" | "db"

struct PreparedFold {
  std::size_t index = 0;
  FoldSplit split;
  NormStats norm;
  LabeledDataset train, validation, test;
  PairDataset pairs;             // empty for the identity arm
  PairDataset validation_pairs;  // empty for the identity arm
};

/// Splits `all` by subject, fits min-max on the training windows and
/// samples the pair sets the task needs. Pair seeds depend on (seed, fold)
/// only, so the two pair-based arms see identically seeded draws.
PreparedFold prepare_fold(const LabeledDataset& all, const FoldSplit& split, std::size_t fold_index, AblationTask task,
                          std::size_t pair_size, std::size_t validation_pair_size, std::uint64_t seed);

ModelConfig model_config_for(const PreparedFold& fold, AblationTask task);

struct FoldResult {
  std::size_t fold = 0;
  std::size_t repeat = 0;
  int test_subject = 0;
  ClassificationMetrics metrics;
  ConfusionMatrix confusion;
  SelectionInfo selection;
};

struct Quartiles {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};
/// Linear interpolation between closest ranks.
Quartiles quartiles(std::vector<double> values);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<double> per_fold;
  Quartiles quartiles;
};

struct MetricsReport {
  std::string dataset;
  std::string task = "ours";
  std::size_t folds = 0;
  std::size_t repeats = 0;
  MetricSummary accuracy, f1_macro, f1_weighted;
  std::vector<FoldResult> runs;
  std::string config_digest;
};

/// Per-fold value = mean over repeats; summary = mean and population std
/// across folds. Throws DataError when folds have different repeat counts.
MetricsReport aggregate_runs(const std::vector<FoldResult>& runs);

struct EvalOptions {
  TrainingConfig training;
  std::size_t pair_size = 1000;
  std::size_t validation_pair_size = 1000;
  std::size_t repeats = 2;
  std::uint64_t seed = 0;
  std::vector<std::size_t> folds;  // empty = all
  std::size_t jobs = 1;
  /// Called from worker threads when jobs > 1.
  std::function<void(const FoldResult&, const TrainedModel&)> on_fold;
  std::function<TrainingHooks(std::size_t fold, std::size_t repeat)> hooks_for;
};

/// Trains and tests one (fold, repeat) job. Repeat r trains with seed + r.
FoldResult run_fold(const PreparedFold& fold, AblationTask task, const TrainingConfig& training, std::size_t repeat,
                    std::uint64_t seed, const TrainingHooks& hooks = {}, TrainedModel* trained = nullptr);

/// Full leave-one-subject-out run of one arm.
MetricsReport run_ablation(const LabeledDataset& all, AblationTask task, const EvalOptions& options);

std::string report_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);
/// One row per report: task, then mean and std of each metric, then the
/// config digest.
std::string report_csv(std::span<const MetricsReport> reports);
std::string boxplot_json(const MetricsReport& report);
std::string fold_result_json(const FoldResult& result);
FoldResult fold_result_from_json(const std::string& text);

}  // namespace advhar
