// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "advhar/config.hpp"
#include "advhar/error.hpp"
#include "json.hpp"
#include "support.hpp"

namespace advhar {
namespace {

using nlohmann::json;

TEST(Config, MinimalDocumentGetsDatasetDefaults) {
  const ExperimentConfig c = config_from_json(R"({"dataset": "MHEALTH", "paths": {"raw": "/data/mhealth"}})");
  EXPECT_EQ(c.dataset, DatasetKind::kMhealth);
  EXPECT_EQ(c.pair_size, 10000u);
  EXPECT_EQ(c.training.batch_size_a, 32u);
  EXPECT_EQ(c.training.batch_size_pairs, 375u);
  EXPECT_EQ(c.training.step3.epochs, 150u);
  EXPECT_EQ(c.repeats, 2u);
  EXPECT_EQ(c.raw_dir, "/data/mhealth");
}

TEST(Config, SerializationRoundTrips) {
  ExperimentConfig c = default_config(DatasetKind::kSynthetic);
  c.seed = 99;
  c.folds = {0, 2};
  c.training.step2.learning_rate[3] = 5e-4;
  c.training.clip_grad_norm = 2.5;
  c.synthetic.noise_sigma = 0.1;
  const std::string text = config_to_json(c);
  const ExperimentConfig back = config_from_json(text);
  EXPECT_EQ(config_to_json(back), text);
  EXPECT_EQ(config_digest(back), config_digest(c));
  EXPECT_EQ(back.training.clip_grad_norm, 2.5);
}

TEST(Config, EnvironmentOverridesNestedKeys) {
  const EnvMap env{{"ADVHAR_TRAINING__STEP3__EPOCHS", "30"},
                   {"ADVHAR_SEED", "7"},
                   {"ADVHAR_PATHS__OUT", "/tmp/run"},
                   {"ADVHAR_DATASET", "SYNTHETIC"},
                   {"ADVHAR_TASK", "db"},
                   {"UNRELATED", "1"}};
  const ExperimentConfig c = config_from_json(R"({"dataset": "PAMAP2", "seed": 3})", env);
  EXPECT_EQ(c.dataset, DatasetKind::kSynthetic);
  EXPECT_EQ(c.training.step3.epochs, 30u);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.out_dir, "/tmp/run");
  EXPECT_EQ(c.task, AblationTask::kAgnostic);
  // Synthetic batch defaults follow the overridden dataset.
  EXPECT_EQ(c.training.batch_size_a, 16u);

  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC"})", {{"ADVHAR_TRAINING__NOPE", "1"}}), ConfigError);
  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC"})", {{"ADVHAR_TRAINING", "1"}}), ConfigError);
}

TEST(Config, RejectsUnknownKeysWrongTypesAndVersions) {
  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC", "epochs": 3})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC", "training": {"step1": {"epoch": 3}}})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC", "seed": -1})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC", "repeats": "two"})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC", "version": 2})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"dataset": "WISDM"})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"seed": 1})"), ConfigError);
  EXPECT_THROW(config_from_json("not json"), ConfigError);
}

TEST(Config, SemanticValidation) {
  EXPECT_THROW(config_from_json(R"({"dataset": "PAMAP2"})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC", "repeats": 0})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC", "pairs": {"size": 1}})"), ConfigError);
  EXPECT_NO_THROW(config_from_json(R"({"dataset": "SYNTHETIC", "task": "di", "pairs": {"size": 0}})"));
  EXPECT_THROW(config_from_json(R"({"dataset": "SYNTHETIC", "synthetic": {"n_activities": 1}})"), ConfigError);
}

TEST(Config, DigestIgnoresPathsAndJobs) {
  ExperimentConfig a = default_config(DatasetKind::kSynthetic);
  ExperimentConfig b = a;
  b.jobs = 8;
  b.out_dir = "/elsewhere";
  b.raw_dir = "/raw";
  EXPECT_EQ(config_digest(a), config_digest(b));
  b.training.step1.epochs = 3;
  EXPECT_NE(config_digest(a), config_digest(b));

  // Generator settings matter only when the generator supplies the data.
  ExperimentConfig p = default_config(DatasetKind::kPamap2);
  p.raw_dir = "/raw";
  ExperimentConfig q = p;
  q.synthetic.noise_sigma = 0.5;
  EXPECT_EQ(config_digest(p), config_digest(q));
  ExperimentConfig s = a;
  s.synthetic.noise_sigma = 0.5;
  EXPECT_NE(config_digest(a), config_digest(s));
}

TEST(Config, LoadsFromFile) {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "c.json");
    out << R"({"dataset": "SYNTHETIC", "repeats": 1, "synthetic": {"n_subjects": 8}})";
  }
  const ExperimentConfig c = load_config(dir / "c.json");
  EXPECT_EQ(c.repeats, 1u);
  EXPECT_EQ(c.synthetic.n_subjects, 8u);
  EXPECT_EQ(c.schema().kind, DatasetKind::kSynthetic);
  EXPECT_THROW(load_config(dir / "missing.json"), Error);

  // Every key of the full serialization is accepted back.
  const json full = json::parse(config_to_json(c));
  EXPECT_TRUE(full.contains("training"));
  EXPECT_TRUE(full["training"].contains("clip_grad_norm"));
}

}  // namespace
}  // namespace advhar
