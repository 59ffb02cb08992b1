// SPDX-License-Identifier: Apache-2.0
//
// The four network blocks (feature extractor, reconstructor, activity
// classifier, pair discriminator), the subject-identity discriminator used
// by the ablation, and the bundle that owns them with per-block freeze
// flags.
#pragma once

#include <array>
#include <initializer_list>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advhar/ingest.hpp"
#include "advhar/network.hpp"
#include "advhar/optim.hpp"

namespace advhar {

inline constexpr std::size_t kLatentDim = 64;

enum class Block { kFeature = 0, kReconstructor = 1, kClassifier = 2, kDiscriminator = 3 };
inline constexpr std::array<Block, 4> kAllBlocks = {Block::kFeature, Block::kReconstructor, Block::kClassifier,
                                                    Block::kDiscriminator};
std::string to_string(Block block);

enum class DiscriminatorKind { kPair, kIdentity };

nn::NetworkSpec feature_extractor_spec(std::size_t window, std::size_t channels);
/// Throws ConfigError unless window = 64 * 2^k with k >= 1.
nn::NetworkSpec reconstructor_spec(std::size_t window, std::size_t channels);
nn::NetworkSpec classifier_spec(std::size_t activities);
nn::NetworkSpec discriminator_spec();
nn::NetworkSpec identity_discriminator_spec(std::size_t subjects);

struct ModelConfig {
  std::size_t window = 0;
  std::size_t channels = 0;
  std::size_t activities = 0;
  DiscriminatorKind discriminator = DiscriminatorKind::kPair;
  std::size_t identity_classes = 0;  // head width of the identity discriminator

  bool operator==(const ModelConfig&) const = default;
};

/// Initialization seeds, one independent stream per block, so changing the
/// discriminator leaves the other blocks' initial weights untouched.
struct BlockSeeds {
  std::array<std::uint64_t, 4> values{};
  static BlockSeeds derive(std::uint64_t seed);
  std::uint64_t operator[](Block b) const { return values[static_cast<std::size_t>(b)]; }
};

class ModelBundle {
 public:
  ModelBundle() = default;
  ModelBundle(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }

  nn::Network& block(Block b) { return nets_[static_cast<std::size_t>(b)]; }
  const nn::Network& block(Block b) const { return nets_[static_cast<std::size_t>(b)]; }

  bool frozen(Block b) const { return frozen_[static_cast<std::size_t>(b)]; }
  ModelBundle& set_frozen(Block b, bool flag) {
    frozen_[static_cast<std::size_t>(b)] = flag;
    return *this;
  }
  void freeze_only(std::initializer_list<Block> trainable);

  /// Steps `optimizer` on the block unless it is frozen; a frozen block's
  /// parameters and optimizer state stay untouched. Returns whether a step
  /// was taken.
  bool apply_update(Block b, nn::Adam& optimizer);

  /// Training-phase context for a block: running statistics only move for
  /// trainable blocks.
  nn::ForwardContext train_context(Block b, std::mt19937_64* rng) const {
    return {nn::Phase::kTrain, !frozen(b), rng};
  }

  /// Digest of the block's parameters and running statistics.
  std::uint64_t digest(Block b) const { return block(b).state_digest(); }

 private:
  ModelConfig config_;
  std::uint64_t seed_ = 0;
  std::array<nn::Network, 4> nets_;
  std::array<bool, 4> frozen_{};
};

/// The testing-phase model: feature extractor and classifier only.
struct InferenceModel {
  ModelConfig config;
  nn::Network feature;
  nn::Network classifier;

  static InferenceModel from(const ModelBundle& bundle);
  /// (B, K) class probabilities.
  nn::Tensor predict(const nn::Tensor& windows) const;
};

/// Batches windows into the (B, c, w) layout the networks consume.
nn::Tensor windows_tensor(std::span<const Window> windows);
nn::Tensor windows_tensor(const LabeledDataset& dataset, std::span<const std::size_t> indices);
/// Inverse layout change: (B, c, w) row b back to a time-major w*c matrix.
std::vector<float> tensor_row_time_major(const nn::Tensor& t, std::size_t b);

// Single-item inference helpers.
std::vector<float> feature_extract(const ModelBundle& bundle, const Window& window);
/// Time-major (w, c) reconstruction of a latent.
std::vector<float> reconstruct(const ModelBundle& bundle, std::span<const float> latent);
std::vector<float> classify(const ModelBundle& bundle, std::span<const float> latent);
float discriminate(const ModelBundle& bundle, std::span<const float> latent_a, std::span<const float> latent_b);
std::vector<float> discriminate_identity(const ModelBundle& bundle, std::span<const float> latent);

/// Output shapes of the labelled rows of a block for a random input.
std::vector<nn::LayerShape> trace_block(const ModelBundle& bundle, Block b);

}  // namespace advhar
