// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "advhar/eval.hpp"
#include "advhar/metrics.hpp"
#include "advhar/model.hpp"
#include "advhar/pairset.hpp"
#include "advhar/synthetic.hpp"
#include "advhar/trainer.hpp"

using namespace advhar;

namespace {

nn::Tensor random_windows(std::size_t batch, std::size_t channels, std::size_t length) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<float> v(batch * channels * length);
  for (float& x : v) x = u(rng);
  return nn::Tensor({batch, channels, length}, v);
}

void BM_FeatureClassifierInference(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  const ModelBundle bundle({512, 18, 12, DiscriminatorKind::kPair, 0}, 1);
  const InferenceModel model = InferenceModel::from(bundle);
  const nn::Tensor x = random_windows(batch, 18, 512);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_FeatureClassifierInference)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_FeatureForwardBackward(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  ModelBundle bundle({512, 18, 12, DiscriminatorKind::kPair, 0}, 2);
  nn::Network& f = bundle.block(Block::kFeature);
  const nn::Tensor x = random_windows(batch, 18, 512);
  std::mt19937_64 rng(3);
  for (auto _ : state) {
    nn::Tape tape;
    const nn::Tensor z = f.forward(x, {nn::Phase::kTrain, true, &rng}, &tape);
    nn::Tensor grad(z.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = 1e-3f;
    f.zero_grad();
    benchmark::DoNotOptimize(f.backward(grad, tape, {true, false}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_FeatureForwardBackward)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ReconstructorForward(benchmark::State& state) {
  const ModelBundle bundle({512, 18, 12, DiscriminatorKind::kPair, 0}, 4);
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n;
  std::vector<float> z(32 * kLatentDim);
  for (float& v : z) v = n(rng);
  const nn::Tensor latent({32, kLatentDim}, z);
  for (auto _ : state) benchmark::DoNotOptimize(bundle.block(Block::kReconstructor).predict(latent));
}
BENCHMARK(BM_ReconstructorForward)->Unit(benchmark::kMillisecond);

void BM_SamplePairs(benchmark::State& state) {
  SyntheticSpec spec;
  spec.n_subjects = 8;
  spec.windows_per_cell = 50;
  const LabeledDataset ds = generate_synthetic(spec);
  const PairGroupIndex index = enumerate_pair_groups(ds);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_pairs(index, static_cast<std::size_t>(state.range(0)), ++seed));
}
BENCHMARK(BM_SamplePairs)->Arg(1000)->Arg(10000);

void BM_MetricsFromConfusion(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::vector<std::uint64_t> counts(33 * 33);
  for (auto& c : counts) c = rng() % 100;
  const ConfusionMatrix cm(33, counts);
  for (auto _ : state) benchmark::DoNotOptimize(metrics_from_confusion(cm));
}
BENCHMARK(BM_MetricsFromConfusion);

void BM_TrainingEpochSmall(benchmark::State& state) {
  SyntheticSpec spec;
  spec.seed = 7;
  const LabeledDataset all = generate_synthetic(spec);
  const PreparedFold fold = prepare_fold(all, loocv_splits(all.subjects)[0], 0, AblationTask::kOurs, 200, 0, 7);
  TrainingConfig cfg = TrainingConfig::for_schema(all.schema);
  cfg.step1.epochs = 1;
  cfg.step2.epochs = 1;
  cfg.step3.epochs = 1;
  const FoldInputs in{&fold.train, nullptr, &fold.pairs, nullptr};
  const ModelConfig model = model_config_for(fold, AblationTask::kOurs);
  for (auto _ : state) benchmark::DoNotOptimize(run_training(in, model, cfg));
}
BENCHMARK(BM_TrainingEpochSmall)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
