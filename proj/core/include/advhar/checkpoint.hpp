// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container for a ModelBundle:
//
//   "ADVC" u32 version, model config, u64 seed, u64 step counter,
//   u32 config-digest length + bytes, u32 block count, then per block:
//   u8 block id, u64 spec digest, u64 float count, floats (parameters in
//   layer order, then batch-norm running statistics).
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "advhar/model.hpp"

namespace advhar {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::uint64_t step_counter = 0;
  std::string config_digest;
};

void save_checkpoint(const std::filesystem::path& file, const ModelBundle& bundle, std::uint64_t step_counter = 0,
                     const std::string& config_digest = {});

ModelBundle load_checkpoint(const std::filesystem::path& file, CheckpointInfo* info = nullptr);

/// Reads only the feature extractor and classifier blobs; the other blocks
/// are skipped without being deserialized.
InferenceModel load_inference_model(const std::filesystem::path& file, CheckpointInfo* info = nullptr);

}  // namespace advhar
