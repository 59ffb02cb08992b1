// SPDX-License-Identifier: Apache-2.0
//
// advhar: command-line front end for the experiment pipeline.
//
//   advhar synth   --out <dir> [--subjects N --activities K ...]
//   advhar prepare --dataset <kind> --raw <dir> --out <dir>
//   advhar pairs   --windows <file> --n <N> --mode activity|agnostic --seed <k> --out <file>
//   advhar train   --fold <k> --config <file> --out <dir>
//   advhar loocv   --dataset <kind> --config <file> --out <dir>
//   advhar ablate  --task ours|di|db --config <file> --out <dir>
//   advhar report  --in <dir> --format csv|json
//
// Flags take precedence over ADVHAR_* environment overrides, which take
// precedence over the config file.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "advhar/config.hpp"
#include "advhar/error.hpp"
#include "advhar/pairset.hpp"
#include "advhar/pipeline.hpp"
#include "advhar/synthetic.hpp"
#include "advhar/windows_io.hpp"
#include "json.hpp"

namespace {

using namespace advhar;
using nlohmann::json;

struct CommonFlags {
  std::string config;
  std::string dataset;
  std::string raw;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool materialize = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_dataset) {
  cmd->add_option("--config", f.config, "Experiment config (JSON)");
  if (with_dataset) {
    cmd->add_option("--dataset", f.dataset, "PAMAP2, MHEALTH, REALDISP or SYNTHETIC");
    cmd->add_option("--raw", f.raw, "Directory of raw recordings");
  }
  cmd->add_option("--out", f.out, "Artifact directory");
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--jobs", f.jobs, "Concurrent training jobs");
  cmd->add_flag("--materialize-folds", f.materialize, "Write normalized per-fold windows files");
}

ExperimentConfig build_config(const CommonFlags& f, const EnvMap& extra = {}) {
  EnvMap env = environment_overrides();
  auto set = [&](const std::string& key, const json& value) { env[std::string(kEnvPrefix) + key] = value.dump(); };
  if (!f.raw.empty()) set("PATHS__RAW", f.raw);
  if (!f.out.empty()) set("PATHS__OUT", f.out);
  if (f.seed) set("SEED", *f.seed);
  if (f.jobs) set("JOBS", *f.jobs);
  for (const auto& [k, v] : extra) env[k] = v;
  // The dataset key is read before the rest, unquoted.
  if (!f.dataset.empty()) env[std::string(kEnvPrefix) + "DATASET"] = f.dataset;
  if (!f.config.empty()) return load_config(f.config, env);
  return config_from_json("{}", env);
}

int fail(const std::exception& e) {
  std::cerr << "advhar: " << e.what() << '\n';
  return static_cast<int>(exit_code_for(e));
}

void print_report(const MetricsReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << r.dataset << " / " << r.task << " (" << r.folds << " folds x " << r.repeats << " repeats)\n"
     << "  accuracy     " << r.accuracy.mean << " +- " << r.accuracy.std << '\n'
     << "  F1 macro     " << r.f1_macro.mean << " +- " << r.f1_macro.std << '\n'
     << "  F1 weighted  " << r.f1_weighted.mean << " +- " << r.f1_weighted.std << '\n';
  std::cout << os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial subject-invariant human activity recognition"};
  app.require_subcommand(1);

  // synth
  SyntheticSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and a config that uses it");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--subjects", spec.n_subjects, "Number of subjects");
  synth->add_option("--activities", spec.n_activities, "Number of activities");
  synth->add_option("--windows-per-cell", spec.windows_per_cell, "Windows per (subject, activity)");
  synth->add_option("--window", spec.window, "Window length w");
  synth->add_option("--channels", spec.channels, "Channels c");
  synth->add_option("--variability", spec.subject_variability, "Inter-person variability dial");
  synth->add_option("--noise", spec.noise_sigma, "Additive noise sigma");
  synth->add_option("--seed", spec.seed, "Generator seed");

  CommonFlags prepare_flags;
  auto* prepare = app.add_subcommand("prepare", "Window raw recordings and build per-fold inputs");
  add_common(prepare, prepare_flags, true);

  std::string pairs_windows, pairs_out, pairs_mode = "activity";
  std::size_t pairs_n = 0;
  std::uint64_t pairs_seed = 0;
  auto* pairs = app.add_subcommand("pairs", "Sample a pair set from a windows file");
  pairs->add_option("--windows", pairs_windows, "Windows file")->required();
  pairs->add_option("--n", pairs_n, "Number of pairs")->required();
  pairs->add_option("--mode", pairs_mode, "activity or agnostic");
  pairs->add_option("--seed", pairs_seed, "Sampling seed");
  pairs->add_option("--out", pairs_out, "Pair file (JSON lines)")->required();

  CommonFlags train_flags;
  std::size_t train_fold = 0;
  auto* train = app.add_subcommand("train", "Train and test one fold");
  add_common(train, train_flags, true);
  train->add_option("--fold", train_fold, "Fold index")->required();

  CommonFlags loocv_flags;
  auto* loocv = app.add_subcommand("loocv", "Leave-one-subject-out evaluation");
  add_common(loocv, loocv_flags, true);

  CommonFlags ablate_flags;
  std::string ablate_task;
  auto* ablate = app.add_subcommand("ablate", "Leave-one-subject-out evaluation of one discriminator arm");
  add_common(ablate, ablate_flags, true);
  ablate->add_option("--task", ablate_task, "ours, di or db")->required();

  std::string report_in, report_format = "csv", report_out;
  auto* report = app.add_subcommand("report", "Tabulate report.json files");
  report->add_option("--in", report_in, "Directory searched for report.json")->required();
  report->add_option("--format", report_format, "csv or json");
  report->add_option("--out", report_out, "Write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    PipelineOptions options;
    options.progress = &std::cerr;

    if (*synth) {
      const auto config = write_synthetic_experiment(synth_out, spec);
      const double sep = subject_centroid_accuracy(generate_synthetic(spec));
      std::cout << "wrote " << config.string() << "\nsubject centroid accuracy within activity: " << sep << '\n';
      return 0;
    }
    if (*prepare) {
      options.train = false;
      options.report = false;
      options.materialize_folds = prepare_flags.materialize;
      run_pipeline(build_config(prepare_flags), options);
      return 0;
    }
    if (*pairs) {
      WindowsSidecar sidecar;
      const LabeledDataset ds = load_windows(pairs_windows, &sidecar);
      PairDataset p = parse_pair_mode(pairs_mode) == PairMode::kActivityBased
                          ? sample_pairs(enumerate_pair_groups(ds), pairs_n, pairs_seed)
                          : sample_pairs_activity_agnostic(ds, pairs_n, pairs_seed);
      p.source_digest = sidecar.content_digest;
      save_pairs(pairs_out, p, sidecar.config_digest);
      std::cout << "wrote " << p.size() << " pairs to " << pairs_out << '\n';
      return 0;
    }
    if (*train) {
      EnvMap extra;
      extra[std::string(kEnvPrefix) + "FOLDS"] = json::array({train_fold}).dump();
      options.report = false;
      options.materialize_folds = train_flags.materialize;
      const PipelineResult r = run_pipeline(build_config(train_flags, extra), options);
      std::cout << "fold " << train_fold << " artifacts in " << (r.task_dir / ("fold" + std::to_string(train_fold))).string()
                << '\n';
      return 0;
    }
    if (*loocv || *ablate) {
      EnvMap extra;
      options.materialize_folds = (*ablate ? ablate_flags : loocv_flags).materialize;
      extra[std::string(kEnvPrefix) + "TASK"] = json(*ablate ? ablate_task : std::string("ours")).dump();
      const PipelineResult r = run_pipeline(build_config(*ablate ? ablate_flags : loocv_flags, extra), options);
      if (r.report) print_report(*r.report);
      std::cout << "report: " << (r.task_dir / "report.json").string() << '\n';
      return 0;
    }
    if (*report) {
      const std::vector<MetricsReport> reports = collect_reports(report_in);
      std::string text;
      if (report_format == "csv") {
        text = report_csv(reports);
      } else if (report_format == "json") {
        json arr = json::array();
        for (const MetricsReport& r : reports) arr.push_back(json::parse(report_json(r)));
        text = arr.dump(2) + "\n";
      } else {
        throw ConfigError("--format must be csv or json");
      }
      if (report_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(report_out, std::ios::trunc);
        if (!(out << text)) throw IoError("cannot write " + report_out);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    return fail(e);
  }
  return 0;
}
