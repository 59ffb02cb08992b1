// SPDX-License-Identifier: Apache-2.0
//
// Binary windows file plus JSON sidecar.
//
//   header: "ADVW" u32 version, u32 w, u32 c, u32 K, u64 M   (little endian)
//   body:   M windows of w*c float32, each time-major
//   trailer: M records of (u8 activity, i32 subject)
//
// The sidecar "<file>.json" carries the schema, optional NormStats, the
// digest of the binary file and the config digest that produced it.
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "advhar/ingest.hpp"

namespace advhar {

inline constexpr std::uint32_t kWindowsFileVersion = 1;

struct WindowsSidecar {
  DatasetSchema schema;
  std::optional<NormStats> norm;
  std::string content_digest;
  std::string config_digest;
};

std::filesystem::path sidecar_path(const std::filesystem::path& windows_file);

/// Writes the binary file and its sidecar. Returns the content digest.
std::string save_windows(const std::filesystem::path& file, const LabeledDataset& dataset,
                         const std::optional<NormStats>& norm = std::nullopt,
                         const std::string& config_digest = {});

/// Reads a windows file; the sidecar must exist and its digest must match.
LabeledDataset load_windows(const std::filesystem::path& file, WindowsSidecar* sidecar = nullptr);

std::string norm_to_json(const NormStats& stats);
NormStats norm_from_json(const std::string& text);

}  // namespace advhar
