// SPDX-License-Identifier: Apache-2.0
#include "advhar/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "advhar/digest.hpp"
#include "advhar/error.hpp"
#include "json.hpp"
#include "schemas_embedded.hpp"

namespace advhar {

using nlohmann::json;

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

DatasetSchema schema_from_catalog_entry(DatasetKind kind, const json& j) {
  DatasetSchema s;
  s.kind = kind;
  s.window_size = j.at("window_size").get<std::size_t>();
  s.overlap = j.at("overlap").get<std::size_t>();
  s.file_glob = j.value("file_glob", std::string("*"));
  s.subject_offset = j.value("subject_offset", 0);
  s.label_column = j.at("label_column").get<std::size_t>();
  s.channel_columns = j.at("channel_columns").get<std::vector<std::size_t>>();
  for (const json& a : j.at("activities")) {
    s.activities.push_back({a.at("raw").get<int>(), a.value("name", std::string())});
  }
  s.excluded_raw_labels = j.value("excluded_raw_labels", std::vector<int>{});
  s.excluded_subjects = j.value("excluded_subjects", std::vector<int>{});
  s.pair_size = j.value("pair_size", std::size_t{1000});
  s.batch_size_a = j.value("batch_size_a", std::size_t{32});
  s.batch_size_pairs = j.value("batch_size_pairs", std::size_t{64});
  s.validate();
  return s;
}

DatasetSchema schema_from_catalog(const json& catalog, DatasetKind kind) {
  const std::string key = to_string(kind);
  const json& datasets = catalog.at("datasets");
  if (!datasets.contains(key)) throw SchemaError("schema catalog has no entry for " + key);
  return schema_from_catalog_entry(kind, datasets.at(key));
}

// Splits on spaces, tabs and commas; empty fields are skipped.
void tokenize(std::string_view line, std::vector<std::string_view>& fields) {
  fields.clear();
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == ',' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != ',' && line[i] != '\r') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
}

bool parse_real(std::string_view token, double& out) {
  if (token.size() >= 3) {
    const std::string u = upper(token);
    if (u == "NAN" || u == "-NAN") {
      out = std::numeric_limits<double>::quiet_NaN();
      return true;
    }
  }
  const char* first = token.data();
  if (!token.empty() && token.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kPamap2: return "PAMAP2";
    case DatasetKind::kMhealth: return "MHEALTH";
    case DatasetKind::kRealdisp: return "REALDISP";
    case DatasetKind::kSynthetic: return "SYNTHETIC";
  }
  return "?";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  const std::string u = upper(name);
  if (u == "PAMAP2") return DatasetKind::kPamap2;
  if (u == "MHEALTH") return DatasetKind::kMhealth;
  if (u == "REALDISP") return DatasetKind::kRealdisp;
  if (u == "SYNTHETIC") return DatasetKind::kSynthetic;
  throw ConfigError("unknown dataset kind '" + std::string(name) + "'");
}

std::optional<int> DatasetSchema::activity_index(int raw_label) const {
  for (std::size_t k = 0; k < activities.size(); ++k) {
    if (activities[k].raw == raw_label) return static_cast<int>(k);
  }
  return std::nullopt;
}

bool DatasetSchema::is_excluded_label(int raw_label) const {
  return std::find(excluded_raw_labels.begin(), excluded_raw_labels.end(), raw_label) != excluded_raw_labels.end();
}

bool DatasetSchema::is_excluded_subject(int subject) const {
  return std::find(excluded_subjects.begin(), excluded_subjects.end(), subject) != excluded_subjects.end();
}

void DatasetSchema::validate() const {
  if (window_size == 0) throw SchemaError("window size must be positive");
  if (overlap >= window_size) throw SchemaError("overlap must be smaller than the window size");
  if (activities.size() < 2) throw SchemaError("at least two activity labels are required");
  if (channel_columns.empty()) throw SchemaError("schema selects no channels");
  if (activities.size() > 256) throw SchemaError("at most 256 activities fit the windows file format");
}

DatasetSchema builtin_schema(DatasetKind kind) {
  static const json catalog = json::parse(detail::kEmbeddedSchemas);
  return schema_from_catalog(catalog, kind);
}

DatasetSchema load_schema(const std::filesystem::path& catalog_path, DatasetKind kind) {
  std::ifstream in(catalog_path);
  if (!in) throw IoError("cannot open schema catalog " + catalog_path.string());
  try {
    return schema_from_catalog(json::parse(in), kind);
  } catch (const json::exception& e) {
    throw SchemaError("schema catalog " + catalog_path.string() + ": " + e.what());
  }
}

std::string schema_to_json(const DatasetSchema& s) {
  json acts = json::array();
  for (const auto& a : s.activities) acts.push_back({{"raw", a.raw}, {"name", a.name}});
  json j = {{"kind", to_string(s.kind)},
            {"window_size", s.window_size},
            {"overlap", s.overlap},
            {"channels", s.channels()},
            {"file_glob", s.file_glob},
            {"subject_offset", s.subject_offset},
            {"label_column", s.label_column},
            {"channel_columns", s.channel_columns},
            {"activities", acts},
            {"excluded_raw_labels", s.excluded_raw_labels},
            {"excluded_subjects", s.excluded_subjects},
            {"pair_size", s.pair_size},
            {"batch_size_a", s.batch_size_a},
            {"batch_size_pairs", s.batch_size_pairs}};
  return j.dump(2);
}

DatasetSchema schema_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    return schema_from_catalog_entry(parse_dataset_kind(j.at("kind").get<std::string>()), j);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("schema json: ") + e.what());
  }
}

RecordingStream parse_recording(std::istream& in, const DatasetSchema& schema, int subject_id) {
  const std::size_t c = schema.channels();
  std::size_t needed = schema.label_column + 1;
  for (std::size_t col : schema.channel_columns) needed = std::max(needed, col + 1);

  RecordingStream out;
  out.subject_id = subject_id;
  out.channels = c;

  std::vector<float> last(c, std::numeric_limits<float>::quiet_NaN());
  std::vector<std::string_view> fields;
  std::vector<float> row(c);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    tokenize(line, fields);
    if (fields.empty()) continue;
    if (fields.size() < needed) {
      throw SchemaError("row has " + std::to_string(fields.size()) + " columns, schema " + to_string(schema.kind) +
                        " needs " + std::to_string(needed) + " (line " + std::to_string(line_no) + ")");
    }
    double label_value = 0.0;
    if (!parse_real(fields[schema.label_column], label_value) || !std::isfinite(label_value) ||
        label_value != std::floor(label_value)) {
      throw ParseError("invalid activity label '" + std::string(fields[schema.label_column]) + "'", line_no);
    }
    const int label = static_cast<int>(label_value);
    bool complete = true;
    for (std::size_t j = 0; j < c; ++j) {
      double v = 0.0;
      if (!parse_real(fields[schema.channel_columns[j]], v)) {
        throw ParseError("invalid value '" + std::string(fields[schema.channel_columns[j]]) + "'", line_no);
      }
      if (std::isnan(v)) {
        row[j] = last[j];
        if (std::isnan(row[j])) complete = false;
      } else {
        row[j] = static_cast<float>(v);
        last[j] = row[j];
      }
    }
    if (schema.is_excluded_label(label) || !schema.activity_index(label)) continue;
    if (!complete) continue;
    out.samples.insert(out.samples.end(), row.begin(), row.end());
    out.raw_labels.push_back(label);
  }
  return out;
}

RecordingStream read_raw_recording(const std::filesystem::path& path, const DatasetSchema& schema, int subject_id) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recording " + path.string());
  try {
    return parse_recording(in, schema, subject_id);
  } catch (const ParseError& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(path.filename().string() + ": " + e.what());
  }
}

int subject_from_filename(const std::filesystem::path& path, const DatasetSchema& schema) {
  const std::string stem = path.stem().string();
  const auto first = std::find_if(stem.begin(), stem.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); });
  if (first == stem.end()) throw DataError("no subject number in file name " + path.filename().string());
  auto last = first;
  while (last != stem.end() && std::isdigit(static_cast<unsigned char>(*last))) ++last;
  return std::stoi(std::string(first, last)) - schema.subject_offset;
}

std::vector<Window> segment_windows(const RecordingStream& recording, const DatasetSchema& schema) {
  if (recording.channels != schema.channels()) {
    throw SchemaError("recording has " + std::to_string(recording.channels) + " channels, schema expects " +
                      std::to_string(schema.channels()));
  }
  const std::size_t w = schema.window_size, c = schema.channels(), step = schema.step();
  const std::size_t n = recording.rows();
  std::vector<Window> out;
  for (std::size_t start = 0; start + w <= n; start += step) {
    const int label = recording.raw_labels[start];
    const bool pure = std::all_of(recording.raw_labels.begin() + static_cast<std::ptrdiff_t>(start),
                                  recording.raw_labels.begin() + static_cast<std::ptrdiff_t>(start + w),
                                  [label](int l) { return l == label; });
    if (!pure) continue;
    const std::optional<int> activity = schema.activity_index(label);
    if (!activity) continue;
    Window win;
    win.length = w;
    win.channels = c;
    win.activity = *activity;
    win.subject = recording.subject_id;
    const auto* first = recording.samples.data() + start * c;
    win.values.assign(first, first + w * c);
    out.push_back(std::move(win));
  }
  return out;
}

NormStats fit_minmax(std::span<const Window> training_windows) {
  if (training_windows.empty()) throw DataError("fit_minmax: no training windows");
  const std::size_t c = training_windows.front().channels;
  NormStats stats{std::vector<float>(c, std::numeric_limits<float>::infinity()),
                  std::vector<float>(c, -std::numeric_limits<float>::infinity())};
  for (const Window& w : training_windows) {
    if (w.channels != c) throw SchemaError("fit_minmax: windows disagree on channel count");
    for (std::size_t t = 0; t < w.length; ++t) {
      for (std::size_t j = 0; j < c; ++j) {
        const float v = w.values[t * c + j];
        stats.min[j] = std::min(stats.min[j], v);
        stats.max[j] = std::max(stats.max[j], v);
      }
    }
  }
  return stats;
}

Window apply_minmax(const Window& window, const NormStats& stats) {
  if (stats.min.size() != window.channels || stats.max.size() != window.channels) {
    throw SchemaError("apply_minmax: window has " + std::to_string(window.channels) + " channels, stats have " +
                      std::to_string(stats.min.size()));
  }
  Window out = window;
  const std::size_t c = window.channels;
  for (std::size_t t = 0; t < window.length; ++t) {
    for (std::size_t j = 0; j < c; ++j) {
      const double range = static_cast<double>(stats.max[j]) - stats.min[j];
      float& v = out.values[t * c + j];
      v = range > 0.0 ? static_cast<float>((static_cast<double>(v) - stats.min[j]) / range) : 0.0f;
    }
  }
  return out;
}

void apply_minmax(LabeledDataset& dataset, const NormStats& stats) {
  for (Window& w : dataset.windows) w = apply_minmax(w, stats);
}

LabeledDataset build_labeled_dataset(std::span<const RecordingStream> recordings, const DatasetSchema& schema) {
  schema.validate();
  std::vector<const RecordingStream*> ordered;
  for (const RecordingStream& r : recordings) {
    if (!schema.is_excluded_subject(r.subject_id)) ordered.push_back(&r);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const RecordingStream* a, const RecordingStream* b) { return a->subject_id < b->subject_id; });
  LabeledDataset ds;
  ds.schema = schema;
  for (const RecordingStream* r : ordered) {
    std::vector<Window> windows = segment_windows(*r, schema);
    if (!windows.empty()) ds.subjects.push_back(r->subject_id);
    std::move(windows.begin(), windows.end(), std::back_inserter(ds.windows));
  }
  std::sort(ds.subjects.begin(), ds.subjects.end());
  ds.subjects.erase(std::unique(ds.subjects.begin(), ds.subjects.end()), ds.subjects.end());
  if (ds.windows.empty()) throw DataError("dataset is empty after segmentation");
  return ds;
}

LabeledDataset load_raw_directory(const std::filesystem::path& dir, const DatasetSchema& schema) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("raw data directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && glob_match(schema.file_glob, entry.path().filename().string())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no files matching '" + schema.file_glob + "' in " + dir.string());
  std::vector<RecordingStream> recordings;
  for (const fs::path& f : files) {
    const int subject = subject_from_filename(f, schema);
    if (schema.is_excluded_subject(subject)) continue;
    recordings.push_back(read_raw_recording(f, schema, subject));
  }
  return build_labeled_dataset(recordings, schema);
}

LabeledDataset select_subjects(const LabeledDataset& dataset, std::span<const int> subjects) {
  LabeledDataset out;
  out.schema = dataset.schema;
  for (const Window& w : dataset.windows) {
    if (std::find(subjects.begin(), subjects.end(), w.subject) != subjects.end()) out.windows.push_back(w);
  }
  for (int s : dataset.subjects) {
    if (std::find(subjects.begin(), subjects.end(), s) != subjects.end()) out.subjects.push_back(s);
  }
  return out;
}

std::string dataset_digest(const LabeledDataset& dataset) {
  Digest h;
  h.update(to_string(dataset.schema.kind));
  for (const Window& w : dataset.windows) {
    h.update_value(static_cast<std::uint64_t>(w.length));
    h.update_value(static_cast<std::uint64_t>(w.channels));
    h.update_values(std::span<const float>(w.values));
    h.update_value(w.activity);
    h.update_value(w.subject);
  }
  return h.hex();
}

bool glob_match(std::string_view pattern, std::string_view name) {
  std::size_t p = 0, n = 0, star = std::string_view::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

}  // namespace advhar
