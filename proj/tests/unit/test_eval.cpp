// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <random>
#include <set>

#include "advhar/error.hpp"
#include "advhar/eval.hpp"
#include "advhar/metrics.hpp"
#include "advhar/seeding.hpp"
#include "support.hpp"

namespace advhar {
namespace {

// Per-class F1 straight from the definitions, in double precision.
struct Oracle {
  double accuracy, macro, weighted;
};

Oracle brute_force(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  double total = 0, correct = 0, macro = 0, weighted = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) total += static_cast<double>(cm.at(i, j));
    correct += static_cast<double>(cm.at(i, i));
  }
  for (std::size_t c = 0; c < k; ++c) {
    double tp = static_cast<double>(cm.at(c, c)), fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += static_cast<double>(cm.at(o, c));
      fn += static_cast<double>(cm.at(c, o));
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    macro += f1 / static_cast<double>(k);
    weighted += f1 * (tp + fn) / total;
  }
  return {correct / total, macro, weighted};
}

TEST(Metrics, HandDerivedTwoClassExample) {
  const ConfusionMatrix cm(2, {5, 1, 2, 2});
  const ClassificationMetrics m = metrics_from_confusion(cm);
  // Class 0: P = 5/7, R = 5/6, F1 = 10/13. Class 1: P = 2/3, R = 1/2, F1 = 4/7.
  EXPECT_NEAR(m.f1_macro, 0.6703, 1e-4);
  EXPECT_NEAR(m.f1_weighted, 0.6901, 1e-4);
  EXPECT_NEAR(m.f1_macro, (10.0 / 13 + 4.0 / 7) / 2, 1e-12);
  EXPECT_NEAR(m.accuracy, 0.7, 1e-12);
}

TEST(Metrics, MatchBruteForceOnRandomMatrices) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng() % 11;
    std::vector<std::uint64_t> counts(k * k);
    for (auto& c : counts) c = (rng() % 4 == 0) ? 0 : rng() % 50;
    counts[0] += 1;  // never empty
    const ConfusionMatrix cm(k, counts);
    const ClassificationMetrics m = metrics_from_confusion(cm);
    const Oracle o = brute_force(cm);
    EXPECT_NEAR(m.accuracy, o.accuracy, 1e-9);
    EXPECT_NEAR(m.f1_macro, o.macro, 1e-9);
    EXPECT_NEAR(m.f1_weighted, o.weighted, 1e-9);
    EXPECT_EQ(m.per_class_f1.size(), k);
  }
}

TEST(Metrics, EdgeCases) {
  EXPECT_THROW(metrics_from_confusion(ConfusionMatrix(3)), DataError);
  // A class never predicted and never present contributes F1 = 0.
  const ClassificationMetrics m = metrics_from_confusion(ConfusionMatrix(3, {4, 0, 0, 0, 4, 0, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.per_class_f1[2], 0.0);
  EXPECT_NEAR(m.f1_macro, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.f1_weighted, 1.0);
  EXPECT_EQ(argmax_rows({0.1f, 0.7f, 0.2f, 0.5f, 0.1f, 0.4f}, 3), (std::vector<std::size_t>{1, 0}));
}

TEST(Splits, EightSubjectsGiveEightPartitioningFolds) {
  const std::vector<int> subjects{1, 2, 3, 4, 5, 6, 7, 8};
  const auto splits = loocv_splits(subjects);
  ASSERT_EQ(splits.size(), 8u);
  std::set<int> tested;
  for (std::size_t f = 0; f < splits.size(); ++f) {
    const FoldSplit& s = splits[f];
    EXPECT_EQ(s.training_subjects.size(), 5u);
    std::multiset<int> all(s.training_subjects.begin(), s.training_subjects.end());
    all.insert(s.test_subject);
    all.insert(s.validation_subjects.begin(), s.validation_subjects.end());
    EXPECT_EQ(all, std::multiset<int>(subjects.begin(), subjects.end()));
    EXPECT_EQ(s.validation_subjects[0], subjects[(f + 1) % 8]);
    EXPECT_EQ(s.validation_subjects[1], subjects[(f + 2) % 8]);
    tested.insert(s.test_subject);
  }
  EXPECT_EQ(tested.size(), 8u);
  const std::vector<int> three{1, 2, 3};
  EXPECT_THROW(loocv_splits(three), DataError);
}

TEST(Quartiles, LinearInterpolationBetweenRanks) {
  const Quartiles q = quartiles({4, 1, 3, 2, 5});
  EXPECT_DOUBLE_EQ(q.min, 1);
  EXPECT_DOUBLE_EQ(q.q1, 2);
  EXPECT_DOUBLE_EQ(q.median, 3);
  EXPECT_DOUBLE_EQ(q.q3, 4);
  EXPECT_DOUBLE_EQ(q.max, 5);
  const Quartiles e = quartiles({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(e.q1, 1.75);
  EXPECT_DOUBLE_EQ(e.median, 2.5);
  EXPECT_DOUBLE_EQ(e.q3, 3.25);
}

FoldResult run_with(std::size_t fold, std::size_t repeat, double acc, double f1m, double f1w) {
  FoldResult r;
  r.fold = fold;
  r.repeat = repeat;
  r.metrics.accuracy = acc;
  r.metrics.f1_macro = f1m;
  r.metrics.f1_weighted = f1w;
  return r;
}

TEST(Aggregate, FoldMeansThenPopulationStatistics) {
  const std::vector<FoldResult> runs{run_with(0, 0, 0.8, 0.7, 0.75), run_with(0, 1, 0.6, 0.5, 0.55),
                                     run_with(1, 0, 0.9, 0.9, 0.9), run_with(1, 1, 1.0, 0.9, 0.95)};
  const MetricsReport r = aggregate_runs(runs);
  EXPECT_EQ(r.folds, 2u);
  EXPECT_EQ(r.repeats, 2u);
  EXPECT_EQ(r.accuracy.per_fold, (std::vector<double>{0.7, 0.95}));
  EXPECT_NEAR(r.accuracy.mean, 0.825, 1e-12);
  EXPECT_NEAR(r.accuracy.std, 0.125, 1e-12);
  EXPECT_NEAR(r.f1_macro.mean, 0.75, 1e-12);
  EXPECT_NEAR(r.f1_weighted.per_fold[1], 0.925, 1e-12);
  // Recomputable from the per-fold values.
  double m = 0;
  for (double v : r.f1_weighted.per_fold) m += v / 2;
  EXPECT_NEAR(r.f1_weighted.mean, m, 1e-12);

  const std::vector<FoldResult> ragged{run_with(0, 0, 1, 1, 1), run_with(0, 1, 1, 1, 1), run_with(1, 0, 1, 1, 1)};
  EXPECT_THROW(aggregate_runs(ragged), DataError);
}

TEST(Reports, JsonRoundTripAndCsv) {
  std::vector<FoldResult> runs{run_with(0, 0, 0.8, 0.7, 0.75), run_with(1, 0, 0.9, 0.85, 0.88)};
  runs[0].confusion = ConfusionMatrix(2, {3, 1, 0, 4});
  runs[1].confusion = ConfusionMatrix(2, {2, 0, 1, 5});
  MetricsReport r = aggregate_runs(runs);
  r.dataset = "SYNTHETIC";
  r.task = "db";
  r.config_digest = "abc";
  const MetricsReport back = report_from_json(report_json(r));
  EXPECT_EQ(report_json(back), report_json(r));
  const std::string csv = report_csv(std::vector<MetricsReport>{r});
  EXPECT_NE(csv.find("config_digest"), std::string::npos);
  EXPECT_NE(csv.find(",abc"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_NE(boxplot_json(r).find("median"), std::string::npos);

  const FoldResult f = fold_result_from_json(fold_result_json(runs[1]));
  EXPECT_EQ(f.confusion, runs[1].confusion);
  EXPECT_EQ(f.fold, 1u);
  EXPECT_THROW(fold_result_from_json("{"), ParseError);
  EXPECT_EQ(parse_ablation_task("di"), AblationTask::kIdentity);
  EXPECT_THROW(parse_ablation_task("dx"), ConfigError);
}

TEST(Evaluate, ConfusionMatchesPerWindowInference) {
  const LabeledDataset all = testing::small_dataset(6, 3, 4, 128, 3);
  const PreparedFold fold = prepare_fold(all, loocv_splits(all.subjects)[2], 2, AblationTask::kOurs, 50, 20, 1);
  const ModelBundle bundle(model_config_for(fold, AblationTask::kOurs), 3);
  const ConfusionMatrix cm = evaluate(InferenceModel::from(bundle), fold.test);
  ConfusionMatrix expected(3);
  for (const Window& w : fold.test.windows) {
    const auto p = classify(bundle, feature_extract(bundle, w));
    expected.add(static_cast<std::size_t>(w.activity),
                 static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
  }
  EXPECT_EQ(cm, expected);
  EXPECT_EQ(cm.total(), fold.test.size());
}

TEST(PrepareFold, NormalizationUsesTrainingSubjectsOnly) {
  const LabeledDataset all = testing::small_dataset(6, 3, 4, 128, 3);
  const FoldSplit split = loocv_splits(all.subjects)[0];
  const PreparedFold fold = prepare_fold(all, split, 0, AblationTask::kOurs, 50, 20, 1);
  EXPECT_EQ(fold.train.subjects, split.training_subjects);
  EXPECT_EQ(fold.test.subjects, std::vector<int>{split.test_subject});
  const NormStats expected = fit_minmax(select_subjects(all, split.training_subjects).windows);
  EXPECT_EQ(fold.norm.min, expected.min);
  EXPECT_EQ(fold.norm.max, expected.max);
  for (const Window& w : fold.train.windows) {
    for (float v : w.values) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  EXPECT_EQ(fold.pairs.size(), 50u);
  EXPECT_EQ(fold.validation_pairs.size(), 20u);
  EXPECT_NO_THROW(validate_pairs(fold.pairs, fold.train));
  EXPECT_NO_THROW(validate_pairs(fold.validation_pairs, fold.validation));
}

TEST(Ablation, ArmsDifferOnlyInTheDiscriminator) {
  const LabeledDataset all = testing::small_dataset(6, 3, 4, 128, 3);
  for (std::size_t f = 0; f < 2; ++f) {
    const FoldSplit split = loocv_splits(all.subjects)[f];
    const PreparedFold ours = prepare_fold(all, split, f, AblationTask::kOurs, 200, 20, 1);
    const PreparedFold di = prepare_fold(all, split, f, AblationTask::kIdentity, 200, 20, 1);
    const PreparedFold db = prepare_fold(all, split, f, AblationTask::kAgnostic, 200, 20, 1);

    EXPECT_EQ(model_config_for(di, AblationTask::kIdentity).identity_classes, split.training_subjects.size());
    EXPECT_TRUE(di.pairs.pairs.empty());
    std::size_t ours_cross = 0, db_cross = 0;
    for (const PairSample& p : ours.pairs.pairs) {
      ours_cross += ours.train.windows[p.a].activity != ours.train.windows[p.b].activity;
    }
    for (const PairSample& p : db.pairs.pairs) {
      db_cross += db.train.windows[p.a].activity != db.train.windows[p.b].activity;
    }
    EXPECT_EQ(ours_cross, 0u);
    EXPECT_GT(db_cross, 0u);

    TrainingConfig none;
    none.step1.epochs = none.step2.epochs = none.step3.epochs = 0;
    none.seed = 1;
    none.fold = f;
    std::vector<std::array<std::uint64_t, 3>> initial;
    for (const auto& [prepared, task] : {std::pair{&ours, AblationTask::kOurs}, std::pair{&di, AblationTask::kIdentity},
                                         std::pair{&db, AblationTask::kAgnostic}}) {
      FoldInputs in{&prepared->train, &prepared->validation, &prepared->pairs, &prepared->validation_pairs};
      const TrainedModel m = run_training(in, model_config_for(*prepared, task), none);
      initial.push_back({m.bundle.digest(Block::kFeature), m.bundle.digest(Block::kReconstructor),
                         m.bundle.digest(Block::kClassifier)});
    }
    EXPECT_EQ(initial[0], initial[1]);
    EXPECT_EQ(initial[0], initial[2]);
  }
}

TEST(RunAblation, SmallEndToEndRun) {
  const LabeledDataset all = testing::small_dataset(5, 3, 4, 128, 3);
  EvalOptions opt;
  opt.training.step1.epochs = 1;
  opt.training.step2.epochs = 1;
  opt.training.step3.epochs = 1;
  opt.training.batch_size_a = 16;
  opt.training.batch_size_pairs = 16;
  opt.pair_size = 40;
  opt.validation_pair_size = 20;
  opt.repeats = 2;
  opt.folds = {0, 3};
  opt.jobs = 2;
  std::size_t calls = 0;
  std::mutex mu;
  opt.on_fold = [&](const FoldResult&, const TrainedModel&) {
    std::lock_guard lock(mu);
    ++calls;
  };
  const MetricsReport r = run_ablation(all, AblationTask::kOurs, opt);
  EXPECT_EQ(calls, 4u);
  EXPECT_EQ(r.folds, 2u);
  EXPECT_EQ(r.repeats, 2u);
  EXPECT_EQ(r.runs.size(), 4u);
  for (const FoldResult& run : r.runs) {
    EXPECT_EQ(run.confusion.total(), select_subjects(all, std::vector<int>{run.test_subject}).size());
  }
  // Thread count does not change results.
  opt.jobs = 1;
  opt.on_fold = nullptr;
  EXPECT_EQ(report_json(run_ablation(all, AblationTask::kOurs, opt)), report_json(r));
}

}  // namespace
}  // namespace advhar
