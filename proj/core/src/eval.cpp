// SPDX-License-Identifier: Apache-2.0
#include "advhar/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "advhar/error.hpp"
#include "advhar/seeding.hpp"
#include "json.hpp"

namespace advhar {

using nlohmann::json;

namespace {

constexpr std::size_t kEvalChunk = 256;

MetricSummary summarize(std::vector<double> per_fold) {
  MetricSummary s;
  s.per_fold = std::move(per_fold);
  const double n = static_cast<double>(s.per_fold.size());
  s.mean = std::accumulate(s.per_fold.begin(), s.per_fold.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : s.per_fold) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / n);
  s.quartiles = quartiles(s.per_fold);
  return s;
}

json summary_json(const MetricSummary& s) {
  const Quartiles& q = s.quartiles;
  return {{"mean", s.mean},
          {"std", s.std},
          {"per_fold", s.per_fold},
          {"quartiles", {{"min", q.min}, {"q1", q.q1}, {"median", q.median}, {"q3", q.q3}, {"max", q.max}}}};
}

MetricSummary summary_from_json(const json& j) {
  MetricSummary s;
  s.mean = j.at("mean").get<double>();
  s.std = j.at("std").get<double>();
  s.per_fold = j.at("per_fold").get<std::vector<double>>();
  const json& q = j.at("quartiles");
  s.quartiles = {q.at("min").get<double>(), q.at("q1").get<double>(), q.at("median").get<double>(),
                 q.at("q3").get<double>(), q.at("max").get<double>()};
  return s;
}

json fold_json(const FoldResult& r) {
  json j = {{"fold", r.fold},
            {"repeat", r.repeat},
            {"test_subject", r.test_subject},
            {"accuracy", r.metrics.accuracy},
            {"f1_macro", r.metrics.f1_macro},
            {"f1_weighted", r.metrics.f1_weighted},
            {"per_class_f1", r.metrics.per_class_f1},
            {"classes", r.confusion.classes()},
            {"confusion", r.confusion.counts()},
            {"selected_step", r.selection.step},
            {"selected_epoch", r.selection.epoch}};
  j["selected_val_f1w"] = r.selection.val_f1_weighted ? json(*r.selection.val_f1_weighted) : json(nullptr);
  j["selected_disc_val_acc"] = r.selection.disc_val_accuracy ? json(*r.selection.disc_val_accuracy) : json(nullptr);
  return j;
}

FoldResult fold_from_json(const json& j) {
  FoldResult r;
  r.fold = j.at("fold").get<std::size_t>();
  r.repeat = j.at("repeat").get<std::size_t>();
  r.test_subject = j.at("test_subject").get<int>();
  r.metrics.accuracy = j.at("accuracy").get<double>();
  r.metrics.f1_macro = j.at("f1_macro").get<double>();
  r.metrics.f1_weighted = j.at("f1_weighted").get<double>();
  r.metrics.per_class_f1 = j.value("per_class_f1", std::vector<double>{});
  r.confusion = ConfusionMatrix(j.at("classes").get<std::size_t>(), j.at("confusion").get<std::vector<std::uint64_t>>());
  r.selection.step = j.value("selected_step", 0);
  r.selection.epoch = j.value("selected_epoch", std::size_t{0});
  if (j.contains("selected_val_f1w") && !j["selected_val_f1w"].is_null()) {
    r.selection.val_f1_weighted = j["selected_val_f1w"].get<double>();
  }
  if (j.contains("selected_disc_val_acc") && !j["selected_disc_val_acc"].is_null()) {
    r.selection.disc_val_accuracy = j["selected_disc_val_acc"].get<double>();
  }
  return r;
}

}  // namespace

std::vector<FoldSplit> loocv_splits(std::span<const int> subjects) {
  const std::size_t n = subjects.size();
  if (n < 4) throw DataError("leave-one-subject-out needs at least 4 subjects, got " + std::to_string(n));
  std::vector<int> sorted(subjects.begin(), subjects.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw DataError("duplicate subject id");
  std::vector<FoldSplit> out;
  for (std::size_t i = 0; i < n; ++i) {
    FoldSplit f;
    f.test_subject = subjects[i];
    f.validation_subjects = {subjects[(i + 1) % n], subjects[(i + 2) % n]};
    for (std::size_t j = 3; j < n; ++j) f.training_subjects.push_back(subjects[(i + j) % n]);
    std::sort(f.training_subjects.begin(), f.training_subjects.end());
    out.push_back(std::move(f));
  }
  return out;
}

ConfusionMatrix evaluate(const InferenceModel& model, const LabeledDataset& test) {
  if (test.windows.empty()) throw DataError("empty test set");
  const std::size_t k = model.config.activities;
  ConfusionMatrix cm(k);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test.size(); start += kEvalChunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(test.size(), start + kEvalChunk); ++i) idx.push_back(i);
    const nn::Tensor probs = model.predict(windows_tensor(test, idx));
    const auto pred = argmax_rows(std::vector<float>(probs.values().begin(), probs.values().end()), k);
    for (std::size_t j = 0; j < idx.size(); ++j) cm.add(static_cast<std::size_t>(test.windows[idx[j]].activity), pred[j]);
  }
  return cm;
}

std::string to_string(AblationTask task) {
  switch (task) {
    case AblationTask::kOurs: return "ours";
    case AblationTask::kIdentity: return "di";
    case AblationTask::kAgnostic: return "db";
  }
  return "?";
}

AblationTask parse_ablation_task(std::string_view text) {
  if (text == "ours") return AblationTask::kOurs;
  if (text == "di") return AblationTask::kIdentity;
  if (text == "db") return AblationTask::kAgnostic;
  throw ConfigError("ablation task must be ours, di or db; got '" + std::string(text) + "'");
}

PreparedFold prepare_fold(const LabeledDataset& all, const FoldSplit& split, std::size_t fold_index, AblationTask task,
                          std::size_t pair_size, std::size_t validation_pair_size, std::uint64_t seed) {
  PreparedFold f;
  f.index = fold_index;
  f.split = split;
  f.train = select_subjects(all, split.training_subjects);
  f.validation = select_subjects(all, split.validation_subjects);
  const std::array<int, 1> test = {split.test_subject};
  f.test = select_subjects(all, test);
  if (f.train.windows.empty()) throw DataError("fold " + std::to_string(fold_index) + " has no training windows");
  if (f.test.windows.empty()) throw DataError("fold " + std::to_string(fold_index) + " has no test windows");
  f.norm = fit_minmax(f.train.windows);
  apply_minmax(f.train, f.norm);
  apply_minmax(f.validation, f.norm);
  apply_minmax(f.test, f.norm);

  const std::uint64_t pair_seed = mix_seed({seed, fold_index, 0x9a1});
  const std::uint64_t val_seed = mix_seed({seed, fold_index, 0x9a2});
  const std::string train_digest = dataset_digest(f.train);
  switch (task) {
    case AblationTask::kOurs:
      f.pairs = sample_pairs(enumerate_pair_groups(f.train), pair_size, pair_seed);
      if (!f.validation.windows.empty() && validation_pair_size >= 2) {
        f.validation_pairs = sample_pairs(enumerate_pair_groups(f.validation), validation_pair_size, val_seed);
      }
      break;
    case AblationTask::kAgnostic:
      f.pairs = sample_pairs_activity_agnostic(f.train, pair_size, pair_seed);
      if (!f.validation.windows.empty() && validation_pair_size >= 2) {
        f.validation_pairs = sample_pairs_activity_agnostic(f.validation, validation_pair_size, val_seed);
      }
      break;
    case AblationTask::kIdentity:
      break;
  }
  f.pairs.source_digest = train_digest;
  return f;
}

ModelConfig model_config_for(const PreparedFold& fold, AblationTask task) {
  ModelConfig m;
  m.window = fold.train.schema.window_size;
  m.channels = fold.train.schema.channels();
  m.activities = fold.train.schema.num_activities();
  if (task == AblationTask::kIdentity) {
    m.discriminator = DiscriminatorKind::kIdentity;
    m.identity_classes = fold.train.subjects.size();
  }
  return m;
}

Quartiles quartiles(std::vector<double> v) {
  if (v.empty()) return {};
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {v.front(), at(0.25), at(0.5), at(0.75), v.back()};
}

MetricsReport aggregate_runs(const std::vector<FoldResult>& runs) {
  if (runs.empty()) throw DataError("no fold results to aggregate");
  std::map<std::size_t, std::vector<const FoldResult*>> by_fold;
  for (const FoldResult& r : runs) by_fold[r.fold].push_back(&r);
  const std::size_t repeats = by_fold.begin()->second.size();
  std::vector<double> acc, f1m, f1w;
  for (const auto& [fold, list] : by_fold) {
    if (list.size() != repeats) {
      throw DataError("fold " + std::to_string(fold) + " has " + std::to_string(list.size()) + " repeats, expected " +
                      std::to_string(repeats));
    }
    double a = 0, m = 0, w = 0;
    for (const FoldResult* r : list) {
      a += r->metrics.accuracy;
      m += r->metrics.f1_macro;
      w += r->metrics.f1_weighted;
    }
    const auto n = static_cast<double>(repeats);
    acc.push_back(a / n);
    f1m.push_back(m / n);
    f1w.push_back(w / n);
  }
  MetricsReport report;
  report.folds = by_fold.size();
  report.repeats = repeats;
  report.accuracy = summarize(acc);
  report.f1_macro = summarize(f1m);
  report.f1_weighted = summarize(f1w);
  report.runs = runs;
  std::sort(report.runs.begin(), report.runs.end(), [](const FoldResult& x, const FoldResult& y) {
    return std::tie(x.fold, x.repeat) < std::tie(y.fold, y.repeat);
  });
  return report;
}

FoldResult run_fold(const PreparedFold& fold, AblationTask task, const TrainingConfig& training, std::size_t repeat,
                    std::uint64_t seed, const TrainingHooks& hooks, TrainedModel* trained) {
  TrainingConfig config = training;
  config.seed = seed + repeat;
  config.fold = fold.index;
  FoldInputs inputs;
  inputs.train = &fold.train;
  inputs.validation = fold.validation.windows.empty() ? nullptr : &fold.validation;
  if (task != AblationTask::kIdentity) inputs.pairs = &fold.pairs;
  if (!fold.validation_pairs.pairs.empty()) inputs.validation_pairs = &fold.validation_pairs;
  TrainedModel model = run_training(inputs, model_config_for(fold, task), config, hooks);
  FoldResult r;
  r.fold = fold.index;
  r.repeat = repeat;
  r.test_subject = fold.split.test_subject;
  r.confusion = evaluate(InferenceModel::from(model.bundle), fold.test);
  r.metrics = metrics_from_confusion(r.confusion);
  r.selection = model.selection;
  if (trained) *trained = std::move(model);
  return r;
}

MetricsReport run_ablation(const LabeledDataset& all, AblationTask task, const EvalOptions& options) {
  const std::vector<FoldSplit> splits = loocv_splits(all.subjects);
  std::vector<std::size_t> folds = options.folds;
  if (folds.empty()) {
    for (std::size_t i = 0; i < splits.size(); ++i) folds.push_back(i);
  }
  for (std::size_t f : folds) {
    if (f >= splits.size()) throw ConfigError("fold " + std::to_string(f) + " does not exist");
  }
  if (options.repeats == 0) throw ConfigError("repeats must be at least 1");

  std::vector<PreparedFold> prepared(folds.size());
  for (std::size_t i = 0; i < folds.size(); ++i) {
    prepared[i] = prepare_fold(all, splits[folds[i]], folds[i], task, options.pair_size, options.validation_pair_size,
                               options.seed);
  }

  struct Job {
    std::size_t prepared, repeat;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    for (std::size_t r = 0; r < options.repeats; ++r) jobs.push_back({i, r});
  }
  std::vector<FoldResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const Job& job = jobs[j];
        const PreparedFold& fold = prepared[job.prepared];
        const TrainingHooks hooks = options.hooks_for ? options.hooks_for(fold.index, job.repeat) : TrainingHooks{};
        TrainedModel trained;
        results[j] = run_fold(fold, task, options.training, job.repeat, options.seed, hooks, &trained);
        if (options.on_fold) options.on_fold(results[j], trained);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.jobs, 1, jobs.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  MetricsReport report = aggregate_runs(results);
  report.dataset = to_string(all.schema.kind);
  report.task = to_string(task);
  return report;
}

std::string fold_result_json(const FoldResult& result) { return fold_json(result).dump(2); }

FoldResult fold_result_from_json(const std::string& text) {
  try {
    return fold_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("fold result json: ") + e.what());
  }
}

std::string report_json(const MetricsReport& report) {
  json runs = json::array();
  for (const FoldResult& r : report.runs) runs.push_back(fold_json(r));
  return json{{"dataset", report.dataset},
              {"task", report.task},
              {"folds", report.folds},
              {"repeats", report.repeats},
              {"std", "population"},
              {"config_digest", report.config_digest},
              {"accuracy", summary_json(report.accuracy)},
              {"f1_macro", summary_json(report.f1_macro)},
              {"f1_weighted", summary_json(report.f1_weighted)},
              {"runs", runs}}
      .dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricsReport r;
    r.dataset = j.value("dataset", std::string());
    r.task = j.value("task", std::string("ours"));
    r.folds = j.at("folds").get<std::size_t>();
    r.repeats = j.at("repeats").get<std::size_t>();
    r.config_digest = j.value("config_digest", std::string());
    r.accuracy = summary_from_json(j.at("accuracy"));
    r.f1_macro = summary_from_json(j.at("f1_macro"));
    r.f1_weighted = summary_from_json(j.at("f1_weighted"));
    for (const json& run : j.at("runs")) r.runs.push_back(fold_from_json(run));
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report json: ") + e.what());
  }
}

std::string report_csv(std::span<const MetricsReport> reports) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "dataset,task,folds,repeats,accuracy_mean,accuracy_std,f1_macro_mean,f1_macro_std,f1_weighted_mean,"
        "f1_weighted_std,config_digest\n";
  for (const MetricsReport& r : reports) {
    os << r.dataset << ',' << r.task << ',' << r.folds << ',' << r.repeats << ',' << r.accuracy.mean << ','
       << r.accuracy.std << ',' << r.f1_macro.mean << ',' << r.f1_macro.std << ',' << r.f1_weighted.mean << ','
       << r.f1_weighted.std << ',' << r.config_digest << '\n';
  }
  return os.str();
}

std::string boxplot_json(const MetricsReport& report) {
  return json{{"dataset", report.dataset},
              {"task", report.task},
              {"config_digest", report.config_digest},
              {"accuracy", summary_json(report.accuracy)},
              {"f1_macro", summary_json(report.f1_macro)},
              {"f1_weighted", summary_json(report.f1_weighted)}}
      .dump(2);
}

}  // namespace advhar
