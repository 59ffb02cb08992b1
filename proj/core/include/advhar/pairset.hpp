// SPDX-License-Identifier: Apache-2.0
//
// Same-activity window pairs labelled same-subject (g=1) or
// different-subject (g=0), balanced per class and spread evenly over the
// subject combinations of each class.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "advhar/ingest.hpp"

namespace advhar {

enum class PairMode { kActivityBased, kActivityAgnostic };

std::string to_string(PairMode mode);
PairMode parse_pair_mode(std::string_view text);  // "activity" | "agnostic"

struct PairGroupIndex {
  /// (activity, subject) -> window indices in dataset order.
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_activity_subject;
  std::vector<int> subjects;
  std::size_t source_size = 0;

  const std::vector<std::size_t>* group(int activity, int subject) const;
};

PairGroupIndex enumerate_pair_groups(const LabeledDataset& dataset);

struct PairSample {
  std::size_t a = 0;
  std::size_t b = 0;
  int activity = -1;  // -1 in activity-agnostic mode
  int subject_a = 0;
  int subject_b = 0;
  int g = 0;

  bool operator==(const PairSample&) const = default;
};

struct PairDataset {
  std::vector<PairSample> pairs;
  PairMode mode = PairMode::kActivityBased;
  std::uint64_t seed = 0;
  std::string source_digest;

  std::size_t size() const noexcept { return pairs.size(); }
};

/// Draws ceil(n/2) same-subject and floor(n/2) different-subject pairs.
/// Each class is split over its cells (one per subject, or one per subject
/// pair) with counts differing by at most one. Inside a cell the activity
/// is uniform over those that can form a pair there, and distinct
/// unordered pairs are drawn without replacement until the cell's pool runs
/// out, then with replacement.
PairDataset sample_pairs(const PairGroupIndex& index, std::size_t n, std::uint64_t seed);

/// As sample_pairs, but pair members only need to satisfy the subject
/// relation; activities are ignored.
PairDataset sample_pairs_activity_agnostic(const LabeledDataset& dataset, std::size_t n, std::uint64_t seed);

/// JSON lines: a header record {seed, mode, n, source_digest} followed by
/// one {a, b, activity, s_a, s_b, g} record per pair.
void save_pairs(const std::filesystem::path& file, const PairDataset& pairs, const std::string& config_digest = {});
PairDataset load_pairs(const std::filesystem::path& file);

/// Checks indices against `dataset` and the subject / activity relations.
void validate_pairs(const PairDataset& pairs, const LabeledDataset& dataset);

}  // namespace advhar
