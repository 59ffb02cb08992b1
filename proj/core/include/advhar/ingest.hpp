// SPDX-License-Identifier: Apache-2.0
//
// Raw recording ingestion: channel selection, sliding-window segmentation
// with label purity, and min-max normalization fit on training subjects.
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace advhar {

enum class DatasetKind { kPamap2, kMhealth, kRealdisp, kSynthetic };

std::string to_string(DatasetKind kind);
/// Accepts the canonical names case-insensitively ("pamap2", "MHEALTH", ...).
DatasetKind parse_dataset_kind(std::string_view name);

struct ActivityLabel {
  int raw = 0;
  std::string name;
};

struct DatasetSchema {
  DatasetKind kind = DatasetKind::kSynthetic;
  std::size_t window_size = 0;  // w
  std::size_t overlap = 0;
  /// Remapped label k is activities[k]; the order is the dataset's listed order.
  std::vector<ActivityLabel> activities;
  std::vector<int> excluded_subjects;
  std::vector<int> excluded_raw_labels;

  // Raw file layout.
  std::string file_glob;
  int subject_offset = 0;
  std::size_t label_column = 0;
  std::vector<std::size_t> channel_columns;

  // Per-dataset experiment defaults.
  std::size_t pair_size = 0;
  std::size_t batch_size_a = 0;
  std::size_t batch_size_pairs = 0;

  std::size_t channels() const noexcept { return channel_columns.size(); }
  std::size_t num_activities() const noexcept { return activities.size(); }
  std::size_t step() const noexcept { return window_size - overlap; }
  std::optional<int> activity_index(int raw_label) const;
  bool is_excluded_label(int raw_label) const;
  bool is_excluded_subject(int subject) const;

  /// Throws SchemaError unless overlap < w, K >= 2 and c >= 1.
  void validate() const;
};

/// Schema from the catalog compiled into the library (core/data/schemas.json).
DatasetSchema builtin_schema(DatasetKind kind);
/// Schema from a catalog file with the same layout as core/data/schemas.json.
DatasetSchema load_schema(const std::filesystem::path& catalog, DatasetKind kind);

std::string schema_to_json(const DatasetSchema& schema);
DatasetSchema schema_from_json(std::string_view text);

/// Rows of one subject's recording restricted to the schema's channels.
struct RecordingStream {
  int subject_id = 0;
  std::size_t channels = 0;
  std::vector<float> samples;  // rows x channels, time-ordered
  std::vector<int> raw_labels;

  std::size_t rows() const noexcept { return raw_labels.size(); }
};

/// A w x c block of samples, stored time-major (row t holds c channel values).
struct Window {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::vector<float> values;
  int activity = 0;
  int subject = 0;

  float at(std::size_t t, std::size_t ch) const { return values[t * channels + ch]; }
};

struct NormStats {
  std::vector<float> min;
  std::vector<float> max;
};

struct LabeledDataset {
  std::vector<Window> windows;
  std::vector<int> subjects;  // sorted, each with at least one window
  DatasetSchema schema;

  std::size_t size() const noexcept { return windows.size(); }
};

/// Parses rows from `in`. Rows whose label is excluded (or not one of the
/// schema's activities) are dropped; missing channel values (NaN) are
/// forward-filled and leading rows that stay incomplete are dropped.
RecordingStream parse_recording(std::istream& in, const DatasetSchema& schema, int subject_id);
RecordingStream read_raw_recording(const std::filesystem::path& path, const DatasetSchema& schema,
                                   int subject_id);

/// Subject id encoded in a raw file name (first digit run minus the schema's
/// subject offset), e.g. "subject105.dat" with offset 100 -> 5.
int subject_from_filename(const std::filesystem::path& path, const DatasetSchema& schema);

/// Windows start at 0, w-overlap, 2(w-overlap), ...; only complete windows
/// whose rows all share one raw label are kept.
std::vector<Window> segment_windows(const RecordingStream& recording, const DatasetSchema& schema);

NormStats fit_minmax(std::span<const Window> training_windows);
/// (v - min_j) / (max_j - min_j) per channel, 0 for constant channels, no clamping.
Window apply_minmax(const Window& window, const NormStats& stats);
void apply_minmax(LabeledDataset& dataset, const NormStats& stats);

/// Segments every recording, dropping excluded subjects. Recordings are
/// taken in (subject, input) order so the output is deterministic.
LabeledDataset build_labeled_dataset(std::span<const RecordingStream> recordings, const DatasetSchema& schema);

/// Reads every file matching schema.file_glob under `dir`.
LabeledDataset load_raw_directory(const std::filesystem::path& dir, const DatasetSchema& schema);

/// Windows whose subject is in `subjects` (order preserved).
LabeledDataset select_subjects(const LabeledDataset& dataset, std::span<const int> subjects);

std::string dataset_digest(const LabeledDataset& dataset);

/// Shell-style match supporting '*' and '?'.
bool glob_match(std::string_view pattern, std::string_view name);

}  // namespace advhar
