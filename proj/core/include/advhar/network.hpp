// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advhar/layers.hpp"

namespace advhar::nn {

enum class LayerKind {
  kLinear,
  kConv1d,
  kConvTranspose1d,
  kBatchNorm,
  kReLU,
  kLeakyReLU,
  kSigmoid,
  kDropout,
  kSoftmax,
  kFlatten,
  kUnflatten,
  kGlobalAvgPool,
};

std::string to_string(LayerKind kind);

/// One row of a network description. Unused fields stay at their defaults.
struct LayerDesc {
  LayerKind kind = LayerKind::kLinear;
  std::size_t in = 0;   // features / input channels
  std::size_t out = 0;  // features / output channels; Unflatten: channels
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t output_padding = 0;
  std::size_t length = 0;  // Unflatten target length
  float rate = 0.0f;       // dropout
  float slope = 0.0f;      // leaky rectifier
  /// Non-empty labels mark the rows whose output shape is reported by
  /// Network::trace_shapes (the rows of the architecture tables).
  std::string label;
};

/// How trace_shapes renders per-item shapes.
enum class ShapeNotation {
  kPlain,               // (C, L) -> [C, L];  (N) -> [-1, N]
  kChannelsHeightWidth, // (C, L) -> [C, 1, L]; (N) -> [1, 1, N]
  kHeightChannelsWidth, // (C, L) -> [1, C, L]; (N) -> [-1, N]
};

struct NetworkSpec {
  std::string name;
  std::vector<std::size_t> input_shape;  // per item, without the batch dim
  std::vector<LayerDesc> layers;
  ShapeNotation notation = ShapeNotation::kPlain;
};

/// Trainable parameter count derived from the description alone.
std::size_t parameter_count(const NetworkSpec& spec);

/// Digest of the architecture description (not of any weights).
std::uint64_t spec_digest(const NetworkSpec& spec);

struct LayerShape {
  std::string label;
  std::vector<long> dims;
};

std::string format_dims(const std::vector<long>& dims);

using Tape = std::vector<LayerCache>;

/// A feed-forward stack built from a NetworkSpec. Value type: copying a
/// Network snapshots its weights and running statistics.
class Network {
 public:
  Network() = default;
  /// Builds the layers and draws initial weights: uniform in
  /// [-1/sqrt(fan_in), 1/sqrt(fan_in)] for linear and convolution weights,
  /// zero biases, unit batch-norm scale.
  Network(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }

  /// Runs every layer. When `tape` is non-null it receives the caches that
  /// backward() needs. Batch-norm running statistics are updated when
  /// ctx.update_running_stats is set and the phase is kTrain.
  Tensor forward(const Tensor& x, const ForwardContext& ctx, Tape* tape);

  /// Inference-phase forward; never mutates the network.
  Tensor predict(const Tensor& x) const;

  /// Backpropagates `grad` through the recorded tape, accumulating into the
  /// parameter gradients when requested. Returns the input gradient (empty
  /// if mode.input is false).
  Tensor backward(const Tensor& grad, const Tape& tape, GradMode mode = {});

  void zero_grad();
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<std::vector<float>*> buffers();
  std::vector<const std::vector<float>*> buffers() const;
  std::size_t parameter_count() const;

  /// Digest over parameter values only.
  std::uint64_t parameter_digest() const;
  /// Digest over parameter values and batch-norm running statistics.
  std::uint64_t state_digest() const;

  /// Inference forward that records the output shape of every labelled row.
  std::vector<LayerShape> trace_shapes(const Tensor& x) const;

  std::size_t layer_count() const noexcept { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }

 private:
  NetworkSpec spec_;
  std::vector<Layer> layers_;
};

}  // namespace advhar::nn
