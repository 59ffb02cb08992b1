// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale datasets with a dial for inter-person variability. Activity k
// is a multi-channel sinusoid with k + 1.38 cycles per window, so successive
// windows of a stream start at different phases. Each subject scales every
// channel's amplitude and shifts its phase by offsets drawn once per
// (subject, channel) and multiplied by `subject_variability`.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "advhar/ingest.hpp"

namespace advhar {

struct SyntheticSpec {
  std::size_t n_subjects = 6;
  std::size_t n_activities = 4;
  std::size_t windows_per_cell = 20;
  std::size_t window = 128;
  std::size_t channels = 3;
  double subject_variability = 1.0;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// n_subjects * n_activities * windows_per_cell windows, subjects numbered
/// 1..n_subjects, in (subject, activity, window) order.
LabeledDataset generate_synthetic(const SyntheticSpec& spec);

/// Schema describing generated data (and the raw files below).
DatasetSchema synthetic_schema(const SyntheticSpec& spec);

/// Writes one comma-separated raw file per subject ("subject<N>.csv":
/// label, then one column per channel), each activity as a continuous
/// stream of windows_per_cell * w rows.
void write_synthetic_raw(const std::filesystem::path& dir, const SyntheticSpec& spec);

/// Shift-invariant per-window signature: each channel's standard deviation,
/// then the correlation of every channel pair (i < j).
std::vector<double> subject_signature(const Window& window);

/// Nearest-centroid subject identification on subject_signature within each
/// activity, scored by leave-one-out over windows. Measures how much subject
/// identity the raw windows carry.
double subject_centroid_accuracy(const LabeledDataset& dataset);

}  // namespace advhar
