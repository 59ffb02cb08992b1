// SPDX-License-Identifier: Apache-2.0
//
// Layer primitives with explicit forward/backward passes. Every layer's
// forward is const; whatever backward needs is written into a LayerCache
// owned by the caller, so one network can be run several times (for example
// on a window batch and on a pair batch) before gradients flow back.
#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "advhar/tensor.hpp"

namespace advhar::nn {

enum class Phase { kTrain, kEval };

struct ForwardContext {
  Phase phase = Phase::kEval;
  /// Whether batch-norm running statistics absorb this batch (training
  /// phase only). Frozen blocks run with this off.
  bool update_running_stats = false;
  /// Dropout masks are drawn from here in the training phase.
  std::mt19937_64* rng = nullptr;
};

/// Which gradients a backward call must produce.
struct GradMode {
  bool parameters = true;
  bool input = true;
};

struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  FloatBuffer value;
  FloatBuffer grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::size_t> s);
  std::size_t size() const noexcept { return value.size(); }
};

struct LayerCache {
  std::vector<std::size_t> input_shape;
  Tensor input;
  Tensor output;
  Tensor aux;                  // batch-norm normalized input, dropout mask
  std::vector<float> mean;     // batch-norm batch statistics
  std::vector<float> var;
  std::vector<float> inv_std;
};

/// (1-D) convolution geometry shared by Conv1d and ConvTranspose1d. The
/// "long" signal position touched by tap j of "short" position t is
/// t*stride - padding + j*dilation.
struct ConvGeometry {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

class Linear {
 public:
  Linear(std::size_t in, std::size_t out);
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  std::vector<const Parameter*> parameters() const { return {&weight_, &bias_}; }
  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }

 private:
  std::size_t in_, out_;
  Parameter weight_;  // (out, in)
  Parameter bias_;    // (out)
};

class Conv1d {
 public:
  Conv1d(std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry);
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  std::vector<const Parameter*> parameters() const { return {&weight_, &bias_}; }
  /// Output length for an input of `length`; 0 if the kernel does not fit.
  std::size_t output_length(std::size_t length) const;
  std::size_t fan_in() const noexcept { return in_ * geometry_.kernel; }

 private:
  std::size_t in_, out_;
  ConvGeometry geometry_;
  Parameter weight_;  // (out, in * kernel)
  Parameter bias_;
};

class ConvTranspose1d {
 public:
  ConvTranspose1d(std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry,
                  std::size_t output_padding);
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  std::vector<const Parameter*> parameters() const { return {&weight_, &bias_}; }
  std::size_t output_length(std::size_t length) const;
  std::size_t fan_in() const noexcept { return out_ * geometry_.kernel; }

 private:
  std::size_t in_, out_;
  ConvGeometry geometry_;
  std::size_t output_padding_;
  Parameter weight_;  // (in, out * kernel), the PyTorch (in, out, k) layout
  Parameter bias_;
};

/// Batch normalization over (B, C, L) or (B, C); statistics per channel.
class BatchNorm {
 public:
  explicit BatchNorm(std::size_t channels, float momentum = 0.1f, float eps = 1e-5f);
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);
  /// Folds the batch statistics recorded in `cache` into the running estimates.
  void update_running(const LayerCache& cache);
  std::vector<Parameter*> parameters() { return {&gamma_, &beta_}; }
  std::vector<const Parameter*> parameters() const { return {&gamma_, &beta_}; }
  std::vector<std::vector<float>*> buffers() { return {&running_mean_, &running_var_}; }
  std::vector<const std::vector<float>*> buffers() const { return {&running_mean_, &running_var_}; }

 private:
  std::size_t channels_;
  float momentum_, eps_;
  Parameter gamma_, beta_;
  std::vector<float> running_mean_, running_var_;
};

enum class ActivationKind { kReLU, kLeakyReLU, kSigmoid };

class Activation {
 public:
  explicit Activation(ActivationKind kind, float slope = 0.01f) : kind_(kind), slope_(slope) {}
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);
  ActivationKind kind() const noexcept { return kind_; }

 private:
  ActivationKind kind_;
  float slope_;
};

/// Inverted dropout; identity outside the training phase.
class Dropout {
 public:
  explicit Dropout(float rate) : rate_(rate) {}
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);
  float rate() const noexcept { return rate_; }

 private:
  float rate_;
};

/// Softmax over the feature axis of (B, K).
class Softmax {
 public:
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);
};

/// (B, C, L) -> (B, C*L).
class Flatten {
 public:
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);
};

/// (B, C*L) -> (B, C, L).
class Unflatten {
 public:
  Unflatten(std::size_t channels, std::size_t length) : channels_(channels), length_(length) {}
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);

 private:
  std::size_t channels_, length_;
};

/// (B, C, L) -> (B, C) by averaging over L.
class GlobalAvgPool {
 public:
  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode);
};

using Layer = std::variant<Linear, Conv1d, ConvTranspose1d, BatchNorm, Activation, Dropout,
                           Softmax, Flatten, Unflatten, GlobalAvgPool>;

}  // namespace advhar::nn
