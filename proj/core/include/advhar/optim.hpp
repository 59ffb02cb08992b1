// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advhar/network.hpp"

namespace advhar::nn {

/// Adaptive-moment estimation; moment decays and epsilon default to the
/// conventional values.
struct AdamOptions {
  float learning_rate = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Optimizer state for one network. The state is positional (one moment
/// pair per parameter, in Network::parameters() order), so it survives
/// copies of the network it was created for.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Applies one update from the accumulated gradients. Never called for a
  /// frozen block, so its step counter only advances while trainable.
  void step(Network& net);

  std::uint64_t steps() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

/// Plain gradient descent: value -= learning_rate * grad.
void sgd_step(Network& net, float learning_rate);

/// Scales all gradients of `nets` so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
double clip_grad_norm(std::vector<Network*> nets, double max_norm);

}  // namespace advhar::nn
