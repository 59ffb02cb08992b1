// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "advhar/error.hpp"
#include "advhar/eval.hpp"
#include "advhar/losses.hpp"
#include "advhar/seeding.hpp"
#include "advhar/trainer.hpp"
#include "support.hpp"

namespace advhar {
namespace {

struct Fixture {
  LabeledDataset all = testing::small_dataset(6, 3, 6, 128, 3);
  PreparedFold fold;
  ModelConfig model;
  TrainingConfig config;

  explicit Fixture(AblationTask task = AblationTask::kOurs) {
    fold = prepare_fold(all, loocv_splits(all.subjects)[0], 0, task, 120, 60, 5);
    model = model_config_for(fold, task);
    config.step1.epochs = 1;
    config.step2.epochs = 1;
    config.step3.epochs = 2;
    config.batch_size_a = 16;
    config.batch_size_pairs = 24;
    config.seed = 5;
  }

  FoldInputs inputs() const { return {&fold.train, &fold.validation, &fold.pairs, &fold.validation_pairs}; }
};

using Digests = std::array<std::uint64_t, 4>;

Digests digests(const ModelBundle& b) {
  Digests d{};
  for (Block blk : kAllBlocks) d[static_cast<std::size_t>(blk)] = b.digest(blk);
  return d;
}

Digests parameter_digests(const ModelBundle& b) {
  Digests d{};
  for (Block blk : kAllBlocks) d[static_cast<std::size_t>(blk)] = b.block(blk).parameter_digest();
  return d;
}

std::size_t at(Block b) { return static_cast<std::size_t>(b); }

TEST(Freeze, ScheduleHoldsAtEveryHookPoint) {
  Fixture fx;
  std::map<TrainingPoint, std::vector<Digests>> seen;
  TrainingHooks hooks;
  hooks.on_point = [&](TrainingPoint p, const ModelBundle& b) { seen[p].push_back(digests(b)); };
  run_training(fx.inputs(), fx.model, fx.config, hooks);

  ASSERT_EQ(seen[TrainingPoint::kStep1Begin].size(), 1u);
  const Digests s1b = seen[TrainingPoint::kStep1Begin][0], s1e = seen[TrainingPoint::kStep1End][0];
  EXPECT_EQ(s1b[at(Block::kClassifier)], s1e[at(Block::kClassifier)]);
  EXPECT_EQ(s1b[at(Block::kDiscriminator)], s1e[at(Block::kDiscriminator)]);
  EXPECT_NE(s1b[at(Block::kFeature)], s1e[at(Block::kFeature)]);

  const Digests s3b = seen[TrainingPoint::kStep3Begin][0], s3e = seen[TrainingPoint::kStep3End][0];
  EXPECT_EQ(s3b[at(Block::kReconstructor)], s3e[at(Block::kReconstructor)]);

  const auto& gb = seen[TrainingPoint::kGeneratorBegin];
  const auto& ge = seen[TrainingPoint::kGeneratorEnd];
  const auto& db = seen[TrainingPoint::kDiscriminatorBegin];
  const auto& de = seen[TrainingPoint::kDiscriminatorEnd];
  ASSERT_GT(gb.size(), 0u);
  ASSERT_EQ(gb.size(), ge.size());
  ASSERT_EQ(db.size(), de.size());
  ASSERT_EQ(gb.size(), db.size());
  for (std::size_t i = 0; i < gb.size(); ++i) {
    EXPECT_EQ(gb[i][at(Block::kDiscriminator)], ge[i][at(Block::kDiscriminator)]) << i;
    EXPECT_EQ(gb[i][at(Block::kReconstructor)], ge[i][at(Block::kReconstructor)]) << i;
    EXPECT_NE(gb[i][at(Block::kFeature)], ge[i][at(Block::kFeature)]) << i;
    EXPECT_EQ(db[i][at(Block::kFeature)], de[i][at(Block::kFeature)]) << i;
    EXPECT_EQ(db[i][at(Block::kClassifier)], de[i][at(Block::kClassifier)]) << i;
    EXPECT_NE(db[i][at(Block::kDiscriminator)], de[i][at(Block::kDiscriminator)]) << i;
  }
}

TEST(Freeze, ZeroLearningRatesLeaveEveryParameterUnchanged) {
  Fixture fx;
  for (StepSchedule* s : {&fx.config.step1, &fx.config.step2, &fx.config.step3}) s->learning_rate = {0, 0, 0, 0};
  const ModelBundle fresh(fx.model, mix_seed({fx.config.seed, fx.config.fold}));
  const TrainedModel out = run_training(fx.inputs(), fx.model, fx.config);
  EXPECT_EQ(parameter_digests(out.bundle), parameter_digests(fresh));
}

TEST(Freeze, NoEpochsReturnsTheInitialBundle) {
  Fixture fx;
  fx.config.step1.epochs = fx.config.step2.epochs = fx.config.step3.epochs = 0;
  const ModelBundle fresh(fx.model, mix_seed({fx.config.seed, fx.config.fold}));
  const TrainedModel out = run_training(fx.inputs(), fx.model, fx.config);
  EXPECT_EQ(digests(out.bundle), digests(fresh));
  EXPECT_EQ(out.selection.step, 0);
  EXPECT_TRUE(out.trace.empty());
}

TEST(Optimizer, SingleGradientStepOnAToyLinearModel) {
  // recon = a * x with x = 1, target 1 and a = 0: the mean-squared gradient
  // is -2, so one plain step at rate 0.1 lands on a = 0.2.
  nn::LayerDesc lin;
  lin.kind = nn::LayerKind::kLinear;
  lin.in = lin.out = 1;
  nn::Network net(nn::NetworkSpec{"toy", {1}, {lin}}, 1);
  for (nn::Parameter* p : net.parameters()) std::fill(p->value.begin(), p->value.end(), 0.0f);
  const nn::Tensor x({1, 1}, std::vector<float>{1.0f});
  const std::vector<float> target{1.0f};
  nn::Tape tape;
  const nn::Tensor y = net.forward(x, {nn::Phase::kTrain, true, nullptr}, &tape);
  const auto g = loss::reconstruction_grad<float>(y.values(), target);
  EXPECT_FLOAT_EQ(g[0], -2.0f);
  net.zero_grad();
  net.backward(nn::Tensor({1, 1}, g), tape);
  net.parameters()[1]->grad[0] = 0.0f;  // the toy has no bias term
  EXPECT_FLOAT_EQ(net.parameters()[0]->grad[0], -2.0f);
  nn::sgd_step(net, 0.1f);
  EXPECT_FLOAT_EQ(net.parameters()[0]->value[0], 0.2f);
}

TEST(Optimizer, StepTwoDiscriminatorRateGivesTenfoldUpdates) {
  const TrainingConfig defaults;
  EXPECT_DOUBLE_EQ(defaults.step2.rate(Block::kDiscriminator), 1e-3);
  EXPECT_DOUBLE_EQ(defaults.step2.rate(Block::kClassifier), 1e-4);
  // Identical networks and gradients, stepped at the two rates.
  ModelBundle b({128, 3, 3, DiscriminatorKind::kPair, 0}, 1);
  nn::Network d1 = b.block(Block::kDiscriminator), d2 = d1;
  std::mt19937_64 rng(3);
  for (nn::Network* n : {&d1, &d2}) {
    std::mt19937_64 r = rng;
    for (nn::Parameter* p : n->parameters()) {
      for (float& gv : p->grad) gv = std::normal_distribution<float>()(r);
    }
  }
  const nn::Network before = d1;
  nn::Adam fast({static_cast<float>(defaults.step2.rate(Block::kDiscriminator))});
  nn::Adam slow({static_cast<float>(defaults.step2.rate(Block::kClassifier))});
  fast.step(d1);
  slow.step(d2);
  double n1 = 0, n2 = 0;
  for (std::size_t i = 0; i < before.parameters().size(); ++i) {
    const auto& v0 = before.parameters()[i]->value;
    for (std::size_t j = 0; j < v0.size(); ++j) {
      n1 += std::pow(static_cast<double>(d1.parameters()[i]->value[j]) - v0[j], 2);
      n2 += std::pow(static_cast<double>(d2.parameters()[i]->value[j]) - v0[j], 2);
    }
  }
  EXPECT_NEAR(std::sqrt(n1 / n2), 10.0, 0.05);
}

TEST(Training, ClassificationLossFallsDuringJointPretraining) {
  Fixture fx;
  fx.config.step1.epochs = 0;
  fx.config.step2.epochs = 5;
  fx.config.step3.epochs = 0;
  const TrainedModel out = run_training(fx.inputs(), fx.model, fx.config);
  std::vector<double> lc;
  for (const EpochRecord& r : out.trace) {
    if (r.step == 2) lc.push_back(*r.classification);
  }
  ASSERT_EQ(lc.size(), 5u);
  EXPECT_LT(lc.back(), lc.front());
}

TEST(Training, SameSeedSameTrace) {
  Fixture fx;
  const TrainedModel a = run_training(fx.inputs(), fx.model, fx.config);
  const TrainedModel b = run_training(fx.inputs(), fx.model, fx.config);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(epoch_record_json(a.trace[i]), epoch_record_json(b.trace[i]));
  }
  EXPECT_EQ(digests(a.bundle), digests(b.bundle));
}

TEST(Training, TraceCoversEveryEpochWithFiniteLosses) {
  Fixture fx;
  const TrainedModel out = run_training(fx.inputs(), fx.model, fx.config);
  ASSERT_EQ(out.trace.size(), 4u);
  EXPECT_EQ(out.trace[0].step, 1);
  EXPECT_TRUE(out.trace[0].reconstruction);
  EXPECT_FALSE(out.trace[0].adversarial);
  EXPECT_EQ(out.trace[3].step, 3);
  for (const EpochRecord& r : out.trace) {
    for (const auto& v : {r.reconstruction, r.classification, r.discrimination, r.adversarial}) {
      if (v) {
        EXPECT_TRUE(std::isfinite(*v));
      }
    }
  }
  EXPECT_TRUE(out.trace[3].adversarial);
  EXPECT_TRUE(out.trace[3].disc_val_accuracy);
}

TEST(Training, SelectedSnapshotMatchesItsEpoch) {
  Fixture fx;
  fx.config.step3.epochs = 3;
  const TrainedModel out = run_training(fx.inputs(), fx.model, fx.config);
  ASSERT_EQ(out.selection.step, 3);
  const EpochRecord* chosen = nullptr;
  double best = -1;
  for (const EpochRecord& r : out.trace) {
    if (r.step != 3) continue;
    best = std::max(best, *r.val_f1_weighted);
    if (r.epoch == out.selection.epoch) chosen = &r;
  }
  ASSERT_NE(chosen, nullptr);
  EXPECT_EQ(chosen->val_f1_weighted, out.selection.val_f1_weighted);
  EXPECT_EQ(*chosen->val_f1_weighted, best);
  // Re-scoring the returned snapshot reproduces the logged value.
  const ConfusionMatrix cm = evaluate(InferenceModel::from(out.bundle), fx.fold.validation);
  EXPECT_NEAR(metrics_from_confusion(cm).f1_weighted, *out.selection.val_f1_weighted, 1e-12);
}

TEST(Hygiene, OnlyTrainingSubjectsReachGradientBatches) {
  Fixture fx;
  const std::set<int> allowed(fx.fold.split.training_subjects.begin(), fx.fold.split.training_subjects.end());
  std::size_t batches = 0;
  std::set<int> steps;
  TrainingHooks hooks;
  hooks.on_batch = [&](const BatchAudit& a) {
    ++batches;
    steps.insert(a.step);
    for (int s : a.subjects) EXPECT_TRUE(allowed.count(s)) << "subject " << s;
  };
  run_training(fx.inputs(), fx.model, fx.config, hooks);
  EXPECT_GT(batches, 0u);
  EXPECT_EQ(steps, (std::set<int>{1, 2, 3}));
}

TEST(Hygiene, OverlappingSubjectsAreRejected) {
  Fixture fx;
  LabeledDataset leaky = fx.fold.validation;
  leaky.subjects.push_back(fx.fold.train.subjects[0]);
  std::sort(leaky.subjects.begin(), leaky.subjects.end());
  leaky.windows.push_back(fx.fold.train.windows[0]);
  FoldInputs in = fx.inputs();
  in.validation = &leaky;
  EXPECT_THROW(run_training(in, fx.model, fx.config), DataError);
}

TEST(Hygiene, NonFiniteLossAborts) {
  Fixture fx;
  LabeledDataset bad = fx.fold.train;
  bad.windows[3].values[10] = std::numeric_limits<float>::quiet_NaN();
  FoldInputs in = fx.inputs();
  in.train = &bad;
  EXPECT_THROW(run_training(in, fx.model, fx.config), TrainingAbort);
}

TEST(Identity, IdentityArmTrainsWithoutPairs) {
  Fixture fx(AblationTask::kIdentity);
  EXPECT_EQ(fx.model.identity_classes, fx.fold.split.training_subjects.size());
  FoldInputs in = fx.inputs();
  in.pairs = nullptr;
  in.validation_pairs = nullptr;
  const TrainedModel out = run_training(in, fx.model, fx.config);
  EXPECT_EQ(out.trace.back().step, 3);
  EXPECT_FALSE(out.trace.back().disc_val_accuracy);
}

TEST(Batches, PartitionTheIndexRange) {
  for (std::size_t n : {1u, 2u, 15u, 16u, 17u, 33u, 100u}) {
    const auto batches = make_batches(n, 16, n);
    std::vector<std::size_t> all;
    for (const auto& b : batches) {
      EXPECT_GE(b.size(), std::min<std::size_t>(n, 2));
      all.insert(all.end(), b.begin(), b.end());
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(n);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(all, expected) << n;
  }
  // 17 = 16 + 1: the single trailing item joins the previous batch.
  EXPECT_EQ(make_batches(17, 16, 1).size(), 1u);
  EXPECT_EQ(make_batches(40, 16, 3), make_batches(40, 16, 3));
  EXPECT_NE(make_batches(40, 16, 3), make_batches(40, 16, 4));
}

TEST(Config, DefaultsFollowTheHyperparameterTable) {
  const TrainingConfig c;
  EXPECT_EQ(c.step1.epochs, 15u);
  EXPECT_EQ(c.step2.epochs, 5u);
  EXPECT_EQ(c.step3.epochs, 150u);
  for (Block b : {Block::kFeature, Block::kReconstructor}) EXPECT_DOUBLE_EQ(c.step1.rate(b), 1e-4);
  for (Block b : {Block::kFeature, Block::kClassifier, Block::kDiscriminator}) EXPECT_DOUBLE_EQ(c.step3.rate(b), 1e-4);
  const TrainingConfig m = TrainingConfig::for_schema(builtin_schema(DatasetKind::kMhealth));
  EXPECT_EQ(m.batch_size_a, 32u);
  EXPECT_EQ(m.batch_size_pairs, 375u);
  const TrainingConfig r = TrainingConfig::for_schema(builtin_schema(DatasetKind::kRealdisp));
  EXPECT_EQ(r.batch_size_a, 30u);
  EXPECT_EQ(r.batch_size_pairs, 395u);
}

}  // namespace
}  // namespace advhar
