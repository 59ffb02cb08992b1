// SPDX-License-Identifier: Apache-2.0
#include "advhar/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "advhar/checkpoint.hpp"
#include "advhar/digest.hpp"
#include "advhar/error.hpp"
#include "advhar/windows_io.hpp"
#include "json.hpp"

namespace advhar {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStampFile = "stamp.json";

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed for " + file.string());
}

// One stage's outputs inside `dir`. Files registered with add() are removed
// again unless commit() runs; commit() records their digests in the stamp.
class Stage {
 public:
  Stage(fs::path dir, std::string name, std::string input_digest, std::string config_digest)
      : dir_(std::move(dir)),
        name_(std::move(name)),
        input_digest_(std::move(input_digest)),
        config_digest_(std::move(config_digest)) {}

  Stage(const Stage&) = delete;
  Stage& operator=(const Stage&) = delete;

  ~Stage() {
    if (!started_ || committed_) return;
    std::error_code ec;
    for (const fs::path& f : files_) fs::remove(f, ec);
    if (created_dir_) fs::remove(dir_, ec);  // only succeeds when empty
  }

  const fs::path& dir() const { return dir_; }

  bool up_to_date() const {
    const fs::path stamp = dir_ / kStampFile;
    if (!fs::exists(stamp)) return false;
    const json j = json::parse(read_text(stamp), nullptr, false);
    if (j.is_discarded() || j.value("stage", "") != name_ || j.value("input_digest", "") != input_digest_) return false;
    if (!j.contains("outputs") || !j["outputs"].is_object()) return false;
    for (const auto& [file, digest] : j["outputs"].items()) {
      const fs::path p = dir_ / file;
      if (!fs::exists(p) || file_digest(p.string()) != digest.get<std::string>()) return false;
    }
    return true;
  }

  void begin() {
    created_dir_ = !fs::exists(dir_);
    fs::create_directories(dir_);
    fs::remove(dir_ / kStampFile);
    started_ = true;
  }

  fs::path add(const std::string& file) {
    files_.push_back(dir_ / file);
    return files_.back();
  }

  void commit() {
    json outputs = json::object();
    for (const fs::path& f : files_) outputs[fs::relative(f, dir_).generic_string()] = file_digest(f.string());
    write_text(dir_ / kStampFile, json{{"stage", name_},
                                       {"input_digest", input_digest_},
                                       {"config_digest", config_digest_},
                                       {"outputs", outputs}}
                                      .dump(2));
    committed_ = true;
  }

 private:
  fs::path dir_;
  std::string name_, input_digest_, config_digest_;
  std::vector<fs::path> files_;
  bool started_ = false, committed_ = false, created_dir_ = false;
};

class Progress {
 public:
  explicit Progress(std::ostream* out) : out_(out) {}
  void line(const std::string& text) {
    if (!out_) return;
    std::lock_guard lock(mutex_);
    *out_ << text << '\n' << std::flush;
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

std::string raw_inputs_digest(const ExperimentConfig& config, const DatasetSchema& schema) {
  Digest d;
  d.update(schema_to_json(schema));
  if (config.raw_dir.empty()) {
    const json synth = json::parse(config_to_json(config))["synthetic"];
    d.update(synth.dump());
    return d.hex();
  }
  if (!fs::is_directory(config.raw_dir)) throw DataError("raw data directory not found: " + config.raw_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(config.raw_dir)) {
    if (entry.is_regular_file() && glob_match(schema.file_glob, entry.path().filename().string())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    d.update(f.filename().string());
    d.update(file_digest(f.string()));
  }
  return d.hex();
}

std::string fold_dir_name(std::size_t fold) { return "fold" + std::to_string(fold); }
std::string repeat_dir_name(std::size_t repeat) { return "repeat" + std::to_string(repeat); }

json fold_json(const PreparedFold& f, const std::string& windows_digest, const std::string& cfg_digest) {
  return {{"fold", f.index},
          {"test_subject", f.split.test_subject},
          {"validation_subjects", f.split.validation_subjects},
          {"training_subjects", f.split.training_subjects},
          {"norm", json::parse(norm_to_json(f.norm))},
          {"windows_digest", windows_digest},
          {"config_digest", cfg_digest}};
}

// Rebuilds a fold from its stage directory: materialized windows files when
// present, otherwise the shared windows file split and normalized again.
PreparedFold load_prepared_fold(const fs::path& dir, const LabeledDataset& all, const FoldSplit& split,
                                std::size_t index) {
  PreparedFold f;
  f.index = index;
  f.split = split;
  const json meta = json::parse(read_text(dir / "fold.json"));
  f.norm = norm_from_json(meta.at("norm").dump());
  if (fs::exists(dir / "train.advw")) {
    f.train = load_windows(dir / "train.advw");
    f.validation = load_windows(dir / "validation.advw");
    f.test = load_windows(dir / "test.advw");
  } else {
    const std::array<int, 1> test = {split.test_subject};
    f.train = select_subjects(all, split.training_subjects);
    f.validation = select_subjects(all, split.validation_subjects);
    f.test = select_subjects(all, test);
    apply_minmax(f.train, f.norm);
    apply_minmax(f.validation, f.norm);
    apply_minmax(f.test, f.norm);
  }
  if (fs::exists(dir / "pairs.jsonl")) {
    f.pairs = load_pairs(dir / "pairs.jsonl");
    validate_pairs(f.pairs, f.train);
  }
  if (fs::exists(dir / "validation_pairs.jsonl")) {
    f.validation_pairs = load_pairs(dir / "validation_pairs.jsonl");
    validate_pairs(f.validation_pairs, f.validation);
  }
  return f;
}

std::string stamp_input_digest(const fs::path& dir) {
  const json j = json::parse(read_text(dir / kStampFile));
  return j.at("input_digest").get<std::string>();
}

}  // namespace

ExitCode exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return ExitCode::kConfig;
  if (dynamic_cast<const DataError*>(&error) || dynamic_cast<const SchemaError*>(&error) ||
      dynamic_cast<const ParseError*>(&error)) {
    return ExitCode::kData;
  }
  if (dynamic_cast<const TrainingAbort*>(&error)) return ExitCode::kTrainingAbort;
  if (dynamic_cast<const IoError*>(&error) || dynamic_cast<const fs::filesystem_error*>(&error)) return ExitCode::kIo;
  return ExitCode::kInternal;
}

LabeledDataset load_experiment_dataset(const ExperimentConfig& config) {
  const DatasetSchema schema = config.schema();
  if (config.raw_dir.empty()) {
    if (config.dataset != DatasetKind::kSynthetic) throw ConfigError("paths.raw is required");
    return generate_synthetic(config.synthetic);
  }
  return load_raw_directory(config.raw_dir, schema);
}

PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options) {
  config.validate();
  if (config.out_dir.empty()) throw ConfigError("paths.out is required");
  Progress progress(options.progress);
  PipelineResult result;
  const std::string cfg_digest = config_digest(config);
  const DatasetSchema schema = config.schema();
  const std::string task = to_string(config.task);

  // Stage 1: window every recording.
  const fs::path prepare_dir = config.out_dir / "prepare";
  const fs::path windows_file = prepare_dir / "windows.advw";
  LabeledDataset all;
  {
    Stage stage(prepare_dir, "prepare", raw_inputs_digest(config, schema), cfg_digest);
    if (stage.up_to_date()) {
      all = load_windows(windows_file);
      ++result.stages_skipped;
      progress.line("prepare: up to date");
    } else {
      all = load_experiment_dataset(config);
      stage.begin();
      stage.add("windows.advw");
      stage.add(sidecar_path(windows_file).filename().string());
      save_windows(windows_file, all, std::nullopt, cfg_digest);
      stage.commit();
      ++result.stages_run;
      progress.line("prepare: " + std::to_string(all.size()) + " windows from " + std::to_string(all.subjects.size()) +
                    " subjects");
    }
  }
  const std::string windows_digest = file_digest(windows_file.string());

  const std::vector<FoldSplit> splits = loocv_splits(all.subjects);
  std::vector<std::size_t> folds = config.folds;
  if (folds.empty()) {
    for (std::size_t i = 0; i < splits.size(); ++i) folds.push_back(i);
  }
  for (std::size_t f : folds) {
    if (f >= splits.size()) {
      throw ConfigError("fold " + std::to_string(f) + " does not exist (" + std::to_string(splits.size()) + " folds)");
    }
  }

  // Stage 2: per-fold normalized windows and pair sets.
  result.task_dir = config.out_dir / task;
  for (std::size_t f : folds) {
    Digest d;
    d.update(windows_digest).update(task);
    d.update_value(f).update_value(config.pair_size).update_value(config.validation_pair_size).update_value(config.seed);
    d.update_value(options.materialize_folds);
    Stage stage(result.task_dir / fold_dir_name(f), "fold", d.hex(), cfg_digest);
    if (stage.up_to_date()) {
      ++result.stages_skipped;
      progress.line(task + " fold " + std::to_string(f) + ": up to date");
      continue;
    }
    PreparedFold prepared = prepare_fold(all, splits[f], f, config.task, config.pair_size,
                                         config.validation_pair_size, config.seed);
    stage.begin();
    write_text(stage.add("fold.json"), fold_json(prepared, windows_digest, cfg_digest).dump(2));
    if (options.materialize_folds) {
      const auto save_split = [&](const std::string& name, const LabeledDataset& ds) {
        const fs::path file = stage.add(name + ".advw");
        stage.add(sidecar_path(file).filename().string());
        save_windows(file, ds, prepared.norm, cfg_digest);
      };
      save_split("train", prepared.train);
      save_split("validation", prepared.validation);
      save_split("test", prepared.test);
    }
    if (!prepared.pairs.pairs.empty()) save_pairs(stage.add("pairs.jsonl"), prepared.pairs, cfg_digest);
    if (!prepared.validation_pairs.pairs.empty()) {
      save_pairs(stage.add("validation_pairs.jsonl"), prepared.validation_pairs, cfg_digest);
    }
    stage.commit();
    ++result.stages_run;
    progress.line(task + " fold " + std::to_string(f) + ": test subject " + std::to_string(splits[f].test_subject) +
                  ", " + std::to_string(prepared.train.size()) + " training windows, " +
                  std::to_string(prepared.pairs.size()) + " pairs");
  }
  if (!options.train) return result;

  // Stage 3: one training job per (fold, repeat).
  const std::string training_json = json::parse(config_to_json(config))["training"].dump();
  struct Job {
    std::size_t fold, repeat;
  };
  std::vector<Job> jobs;
  for (std::size_t f : folds) {
    for (std::size_t r = 0; r < config.repeats; ++r) jobs.push_back({f, r});
  }
  std::vector<FoldResult> results(jobs.size());
  std::atomic<std::size_t> next{0}, run{0}, skipped{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const Job job = jobs[j];
        const fs::path fold_dir = result.task_dir / fold_dir_name(job.fold);
        Digest d;
        d.update(stamp_input_digest(fold_dir)).update(training_json).update(task);
        d.update_value(job.repeat).update_value(config.seed);
        Stage stage(fold_dir / repeat_dir_name(job.repeat), "train", d.hex(), cfg_digest);
        const std::string label = task + " fold " + std::to_string(job.fold) + " repeat " + std::to_string(job.repeat);
        if (stage.up_to_date()) {
          results[j] = fold_result_from_json(read_text(stage.dir() / "result.json"));
          ++skipped;
          progress.line(label + ": up to date");
          continue;
        }
        const PreparedFold prepared = load_prepared_fold(fold_dir, all, splits[job.fold], job.fold);
        stage.begin();
        std::ofstream log(stage.add("train_log.jsonl"), std::ios::trunc);
        if (!log) throw IoError("cannot write training log in " + stage.dir().string());
        log << json{{"config_digest", cfg_digest}, {"fold", job.fold}, {"repeat", job.repeat}}.dump() << '\n';
        TrainingHooks hooks;
        hooks.on_epoch = [&](const EpochRecord& rec) { log << epoch_record_json(rec) << '\n' << std::flush; };
        TrainedModel trained;
        results[j] = run_fold(prepared, config.task, config.training, job.repeat, config.seed, hooks, &trained);
        log.close();
        if (!log) throw IoError("write failed for training log in " + stage.dir().string());
        save_checkpoint(stage.add("model.advc"), trained.bundle, 0, cfg_digest);
        json rj = json::parse(fold_result_json(results[j]));
        rj["config_digest"] = cfg_digest;
        write_text(stage.add("result.json"), rj.dump(2));
        stage.commit();
        ++run;
        std::ostringstream msg;
        msg.precision(4);
        msg << label << ": accuracy " << results[j].metrics.accuracy << ", weighted F1 "
            << results[j].metrics.f1_weighted;
        progress.line(msg.str());
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.jobs, 1, std::max<std::size_t>(jobs.size(), 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  result.stages_run += run;
  result.stages_skipped += skipped;
  if (error) std::rethrow_exception(error);
  if (!options.report) return result;

  // Stage 4: aggregate.
  MetricsReport report = aggregate_runs(results);
  report.dataset = to_string(config.dataset);
  report.task = task;
  report.config_digest = cfg_digest;
  Digest d;
  for (const FoldResult& r : report.runs) d.update(fold_result_json(r));
  Stage stage(result.task_dir, "report", d.hex(), cfg_digest);
  stage.begin();
  write_text(stage.add("report.json"), report_json(report));
  const std::vector<MetricsReport> one = {report};
  write_text(stage.add("report.csv"), report_csv(one));
  write_text(stage.add("boxplot.json"), boxplot_json(report));
  stage.commit();
  ++result.stages_run;
  result.report = std::move(report);
  return result;
}

std::vector<MetricsReport> collect_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("report directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no report.json under " + dir.string());
  std::vector<MetricsReport> out;
  for (const fs::path& f : files) out.push_back(report_from_json(read_text(f)));
  return out;
}

fs::path write_synthetic_experiment(const fs::path& dir, const SyntheticSpec& spec) {
  spec.validate();
  const fs::path raw = fs::absolute(dir / "raw");
  write_synthetic_raw(raw, spec);
  ExperimentConfig config = default_config(DatasetKind::kSynthetic);
  config.synthetic = spec;
  config.raw_dir = raw;
  config.out_dir = fs::absolute(dir / "out");
  config.seed = spec.seed;
  config.training.seed = spec.seed;
  const fs::path file = dir / "config.json";
  write_text(file, config_to_json(config));
  return file;
}

}  // namespace advhar
