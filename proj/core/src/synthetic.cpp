// SPDX-License-Identifier: Apache-2.0
#include "advhar/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "advhar/error.hpp"
#include "advhar/seeding.hpp"

namespace advhar {

namespace {

struct SubjectOffsets {
  std::vector<double> amplitude;  // multiplicative
  std::vector<double> phase;      // radians
};

SubjectOffsets subject_offsets(const SyntheticSpec& spec, std::size_t subject) {
  std::mt19937_64 rng(mix_seed({spec.seed, 0x5b, subject}));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  SubjectOffsets o;
  for (std::size_t ch = 0; ch < spec.channels; ++ch) {
    o.amplitude.push_back(1.0 + spec.subject_variability * u(rng));
    o.phase.push_back(spec.subject_variability * std::numbers::pi * u(rng));
  }
  return o;
}

// Fractional part of the cycles per window: consecutive windows start at
// different phases instead of repeating one template.
constexpr double kPhaseDrift = 0.381966;

// Sample `t` (counted from the start of the activity's stream) of one channel.
double clean_value(const SyntheticSpec& spec, const SubjectOffsets& o, std::size_t activity, std::size_t ch,
                   std::size_t t) {
  const double cycles = static_cast<double>(activity + 1) + kPhaseDrift;
  const double base_amp = 1.0 / (1.0 + 0.2 * static_cast<double>(ch));
  const double base_phase = std::numbers::pi * static_cast<double>(ch) / static_cast<double>(spec.channels);
  const double angle = 2.0 * std::numbers::pi * cycles * static_cast<double>(t) / static_cast<double>(spec.window);
  return base_amp * o.amplitude[ch] * std::sin(angle + base_phase + o.phase[ch]);
}

// Row-major stream of windows_per_cell * w rows for one (subject, activity).
std::vector<float> cell_stream(const SyntheticSpec& spec, std::size_t subject, std::size_t activity) {
  const SubjectOffsets o = subject_offsets(spec, subject);
  std::mt19937_64 rng(mix_seed({spec.seed, 0x4e, subject, activity}));
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t rows = spec.windows_per_cell * spec.window;
  std::vector<float> out(rows * spec.channels);
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t ch = 0; ch < spec.channels; ++ch) {
      double v = clean_value(spec, o, activity, ch, t);
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
      out[t * spec.channels + ch] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_subjects == 0 || n_activities < 2 || windows_per_cell == 0 || window == 0 || channels == 0) {
    throw ConfigError("synthetic spec needs positive sizes and at least two activities");
  }
  if (n_activities > 255) throw ConfigError("synthetic spec supports at most 255 activities");
  if (!(subject_variability >= 0.0) || !(noise_sigma >= 0.0)) {
    throw ConfigError("subject_variability and noise_sigma must be non-negative");
  }
}

DatasetSchema synthetic_schema(const SyntheticSpec& spec) {
  spec.validate();
  DatasetSchema s = builtin_schema(DatasetKind::kSynthetic);
  s.window_size = spec.window;
  s.overlap = spec.window / 2;
  s.activities.clear();
  for (std::size_t k = 0; k < spec.n_activities; ++k) {
    s.activities.push_back({static_cast<int>(k + 1), "activity-" + std::to_string(k)});
  }
  s.channel_columns.clear();
  for (std::size_t ch = 0; ch < spec.channels; ++ch) s.channel_columns.push_back(ch + 1);
  s.validate();
  return s;
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  LabeledDataset ds;
  ds.schema = synthetic_schema(spec);
  const std::size_t item = spec.window * spec.channels;
  for (std::size_t s = 1; s <= spec.n_subjects; ++s) {
    ds.subjects.push_back(static_cast<int>(s));
    for (std::size_t k = 0; k < spec.n_activities; ++k) {
      const std::vector<float> stream = cell_stream(spec, s, k);
      for (std::size_t i = 0; i < spec.windows_per_cell; ++i) {
        Window w;
        w.length = spec.window;
        w.channels = spec.channels;
        w.activity = static_cast<int>(k);
        w.subject = static_cast<int>(s);
        w.values.assign(stream.begin() + static_cast<std::ptrdiff_t>(i * item),
                        stream.begin() + static_cast<std::ptrdiff_t>((i + 1) * item));
        ds.windows.push_back(std::move(w));
      }
    }
  }
  return ds;
}

void write_synthetic_raw(const std::filesystem::path& dir, const SyntheticSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(dir);
  for (std::size_t s = 1; s <= spec.n_subjects; ++s) {
    const std::filesystem::path file = dir / ("subject" + std::to_string(s) + ".csv");
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    out.precision(std::numeric_limits<float>::max_digits10);
    for (std::size_t k = 0; k < spec.n_activities; ++k) {
      const std::vector<float> stream = cell_stream(spec, s, k);
      const std::size_t rows = stream.size() / spec.channels;
      for (std::size_t t = 0; t < rows; ++t) {
        out << (k + 1);
        for (std::size_t ch = 0; ch < spec.channels; ++ch) out << ',' << stream[t * spec.channels + ch];
        out << '\n';
      }
    }
    if (!out) throw IoError("write failed for " + file.string());
  }
}

std::vector<double> subject_signature(const Window& w) {
  const std::size_t c = w.channels;
  std::vector<double> mean(c, 0.0), centered(w.values.size());
  for (std::size_t t = 0; t < w.length; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += w.at(t, ch);
  }
  for (double& m : mean) m /= static_cast<double>(w.length);
  for (std::size_t t = 0; t < w.length; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) centered[t * c + ch] = w.at(t, ch) - mean[ch];
  }
  auto cov = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t t = 0; t < w.length; ++t) s += centered[t * c + i] * centered[t * c + j];
    return s / static_cast<double>(w.length);
  };
  std::vector<double> sig, sd(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    sd[ch] = std::sqrt(cov(ch, ch));
    sig.push_back(sd[ch]);
  }
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i + 1; j < c; ++j) {
      sig.push_back(sd[i] > 0.0 && sd[j] > 0.0 ? cov(i, j) / (sd[i] * sd[j]) : 0.0);
    }
  }
  return sig;
}

double subject_centroid_accuracy(const LabeledDataset& dataset) {
  const std::size_t k = dataset.schema.num_activities();
  std::size_t correct = 0, total = 0;
  for (std::size_t a = 0; a < k; ++a) {
    std::vector<int> subject;
    std::vector<std::vector<double>> sig;
    for (const Window& w : dataset.windows) {
      if (w.activity != static_cast<int>(a)) continue;
      subject.push_back(w.subject);
      sig.push_back(subject_signature(w));
    }
    if (sig.empty()) continue;
    const std::size_t dim = sig.front().size();
    std::map<int, std::pair<std::vector<double>, std::size_t>> sums;
    for (std::size_t i = 0; i < sig.size(); ++i) {
      auto& [sum, n] = sums[subject[i]];
      sum.resize(dim, 0.0);
      for (std::size_t j = 0; j < dim; ++j) sum[j] += sig[i][j];
      ++n;
    }
    if (sums.size() < 2) continue;
    for (std::size_t i = 0; i < sig.size(); ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (const auto& [s, entry] : sums) {
        const auto& [sum, n] = entry;
        const bool own = s == subject[i];
        if (own && n < 2) continue;
        const double count = static_cast<double>(own ? n - 1 : n);
        double d = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          const double e = sig[i][j] - (sum[j] - (own ? sig[i][j] : 0.0)) / count;
          d += e * e;
        }
        if (d < best_d) {
          best_d = d;
          best = s;
        }
      }
      correct += best == subject[i];
      ++total;
    }
  }
  if (total == 0) throw DataError("no activity has windows from two subjects");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace advhar
