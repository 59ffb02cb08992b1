// SPDX-License-Identifier: Apache-2.0
//
// The three-step training schedule: reconstruction pretraining (F, R),
// joint multi-task pretraining (F, R, C, D), then alternating adversarial
// updates of (F, C) against a frozen D and of D against frozen F and C,
// with R frozen throughout the last step.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "advhar/ingest.hpp"
#include "advhar/losses.hpp"
#include "advhar/model.hpp"
#include "advhar/pairset.hpp"

namespace advhar {

struct StepSchedule {
  /// Learning rate per block, indexed by Block; blocks a step does not
  /// train ignore their entry.
  std::array<double, 4> learning_rate{};
  std::size_t epochs = 0;

  double rate(Block b) const { return learning_rate[static_cast<std::size_t>(b)]; }
};

struct TrainingConfig {
  StepSchedule step1{{1e-4, 1e-4, 0.0, 0.0}, 15};
  StepSchedule step2{{1e-4, 1e-4, 1e-4, 1e-3}, 5};
  StepSchedule step3{{1e-4, 0.0, 1e-4, 1e-4}, 150};
  std::size_t batch_size_a = 64;
  std::size_t batch_size_pairs = 350;
  loss::LossWeights weights;
  std::uint64_t seed = 0;
  std::size_t fold = 0;
  /// Joint gradient-norm cap per update; off when unset.
  std::optional<double> clip_grad_norm;

  /// Defaults with the dataset's batch sizes.
  static TrainingConfig for_schema(const DatasetSchema& schema);
};

/// One fold's training inputs. Datasets are already normalized; pair
/// indices refer to `train` and `validation_pairs` indices to `validation`.
struct FoldInputs {
  const LabeledDataset* train = nullptr;
  const LabeledDataset* validation = nullptr;
  const PairDataset* pairs = nullptr;             // unused with the identity discriminator
  const PairDataset* validation_pairs = nullptr;  // optional
};

struct EpochRecord {
  std::size_t fold = 0;
  int step = 0;
  std::size_t epoch = 0;
  std::optional<double> reconstruction;
  std::optional<double> classification;
  std::optional<double> discrimination;
  std::optional<double> adversarial;
  std::optional<double> val_accuracy;
  std::optional<double> val_f1_weighted;
  std::optional<double> disc_val_accuracy;
};

std::string epoch_record_json(const EpochRecord& record);

/// Where a training hook fires. Sub-step hooks fire once per iteration.
enum class TrainingPoint {
  kStep1Begin,
  kStep1End,
  kStep2Begin,
  kStep2End,
  kStep3Begin,
  kStep3End,
  kGeneratorBegin,      // sub-step 3.1
  kGeneratorEnd,
  kDiscriminatorBegin,  // sub-step 3.2
  kDiscriminatorEnd,
};

/// Subjects whose windows entered one gradient computation.
struct BatchAudit {
  int step = 0;
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  std::vector<int> subjects;
};

struct TrainingHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const BatchAudit&)> on_batch;
  std::function<void(TrainingPoint, const ModelBundle&)> on_point;
};

struct SelectionInfo {
  int step = 0;  // 0 when no epoch ran
  std::size_t epoch = 0;
  std::optional<double> val_f1_weighted;
  std::optional<double> disc_val_accuracy;
};

struct TrainedModel {
  ModelBundle bundle;
  SelectionInfo selection;
  std::vector<EpochRecord> trace;
  TrainingConfig config;
};

class Trainer {
 public:
  Trainer(TrainingConfig config, FoldInputs inputs, TrainingHooks hooks = {});

  void step1(ModelBundle& bundle);
  void step2(ModelBundle& bundle);
  /// Returns the snapshot with the best validation weighted F1 over the
  /// step's epochs (ties: discriminator accuracy closest to 0.5); the last
  /// state when there is no validation set.
  TrainedModel step3(ModelBundle& bundle);

  const std::vector<EpochRecord>& trace() const noexcept { return trace_; }

 private:
  struct Validation {
    std::optional<double> accuracy, f1_weighted, disc_accuracy;
  };

  Validation validate(const ModelBundle& bundle) const;
  void audit(int step, std::size_t epoch, std::size_t iteration, std::span<const std::size_t> a_batch,
             std::span<const PairSample* const> pair_batch) const;
  void record(EpochRecord record);

  TrainingConfig config_;
  FoldInputs in_;
  TrainingHooks hooks_;
  std::vector<int> train_subjects_;
  std::vector<EpochRecord> trace_;
};

/// Runs steps 1 -> 2 -> 3 on a freshly seeded bundle.
TrainedModel run_training(const FoldInputs& inputs, const ModelConfig& model, const TrainingConfig& config,
                          const TrainingHooks& hooks = {});

/// Shuffled batches over [0, n); a trailing batch of one item is merged
/// into the previous batch.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed);

}  // namespace advhar
