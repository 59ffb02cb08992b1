// SPDX-License-Identifier: Apache-2.0
//
// Base losses and per-step objectives. Every batch loss is the mean over
// batch elements, and every *_grad function returns the gradient of that
// mean with respect to the network output it consumes. Probabilities are
// clamped to [eps, 1-eps] before any log; the gradient is evaluated at the
// clamped value.
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advhar/error.hpp"

namespace advhar::loss {

inline constexpr double kProbEps = 1e-7;

struct LossWeights {
  double adversarial = 0.1;     // w_D
  double reconstruction = 0.7;  // w_R
  double classification = 0.2;  // w_C
};

template <std::floating_point T>
T clamp_prob(T p) {
  return std::clamp(p, static_cast<T>(kProbEps), static_cast<T>(1.0 - kProbEps));
}

// Single-element forms.

template <std::floating_point T>
T bce(T d, int g) {
  if (!(d >= T(0) && d <= T(1))) throw Error("discriminator output outside [0, 1]");
  const T p = clamp_prob(d);
  return g ? -std::log(p) : -std::log(T(1) - p);
}

template <std::floating_point T>
T non_saturating(T d) {
  if (!(d >= T(0) && d <= T(1))) throw Error("discriminator output outside [0, 1]");
  return -std::log(clamp_prob(d));
}

template <std::floating_point T>
T cross_entropy(std::span<const T> probs, std::size_t label) {
  if (label >= probs.size()) throw Error("label outside the probability vector");
  return -std::log(clamp_prob(probs[label]));
}

// Batch forms.

/// Mean squared error over all elements.
template <std::floating_point T>
T reconstruction(std::span<const T> output, std::span<const T> target) {
  if (output.size() != target.size()) throw Error("reconstruction loss: shape mismatch");
  if (output.empty()) return T(0);
  double acc = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double e = static_cast<double>(output[i]) - static_cast<double>(target[i]);
    acc += e * e;
  }
  return static_cast<T>(acc / static_cast<double>(output.size()));
}

template <std::floating_point T>
std::vector<T> reconstruction_grad(std::span<const T> output, std::span<const T> target) {
  if (output.size() != target.size()) throw Error("reconstruction loss: shape mismatch");
  std::vector<T> grad(output.size());
  const T scale = T(2) / static_cast<T>(output.size());
  for (std::size_t i = 0; i < output.size(); ++i) grad[i] = scale * (output[i] - target[i]);
  return grad;
}

/// Mean of -log p[label] over rows of a (B, K) probability matrix.
template <std::floating_point T>
T classification(std::span<const T> probs, std::span<const int> labels, std::size_t classes) {
  if (probs.size() != labels.size() * classes) throw Error("classification loss: shape mismatch");
  if (labels.empty()) return T(0);
  double acc = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    acc += cross_entropy<T>(probs.subspan(b * classes, classes), static_cast<std::size_t>(labels[b]));
  }
  return static_cast<T>(acc / static_cast<double>(labels.size()));
}

template <std::floating_point T>
std::vector<T> classification_grad(std::span<const T> probs, std::span<const int> labels, std::size_t classes) {
  if (probs.size() != labels.size() * classes) throw Error("classification loss: shape mismatch");
  std::vector<T> grad(probs.size(), T(0));
  const T inv_b = T(1) / static_cast<T>(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const std::size_t at = b * classes + static_cast<std::size_t>(labels[b]);
    grad[at] = -inv_b / clamp_prob(probs[at]);
  }
  return grad;
}

/// Mean binary cross-entropy of discriminator outputs against flags g.
template <std::floating_point T>
T discrimination(std::span<const T> d, std::span<const int> g) {
  if (d.size() != g.size()) throw Error("discrimination loss: shape mismatch");
  if (d.empty()) return T(0);
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) acc += bce(d[i], g[i]);
  return static_cast<T>(acc / static_cast<double>(d.size()));
}

template <std::floating_point T>
std::vector<T> discrimination_grad(std::span<const T> d, std::span<const int> g) {
  if (d.size() != g.size()) throw Error("discrimination loss: shape mismatch");
  std::vector<T> grad(d.size());
  const T inv_b = T(1) / static_cast<T>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const T p = clamp_prob(d[i]);
    grad[i] = g[i] ? -inv_b / p : inv_b / (T(1) - p);
  }
  return grad;
}

/// Mean of -log d over the g=0 pairs; 0 when the batch has none.
template <std::floating_point T>
T adversarial(std::span<const T> d, std::span<const int> g) {
  if (d.size() != g.size()) throw Error("adversarial loss: shape mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (g[i] == 0) {
      acc += non_saturating(d[i]);
      ++n;
    }
  }
  return n ? static_cast<T>(acc / static_cast<double>(n)) : T(0);
}

template <std::floating_point T>
std::vector<T> adversarial_grad(std::span<const T> d, std::span<const int> g) {
  if (d.size() != g.size()) throw Error("adversarial loss: shape mismatch");
  const auto n = static_cast<std::size_t>(std::count(g.begin(), g.end(), 0));
  std::vector<T> grad(d.size(), T(0));
  if (n == 0) return grad;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (g[i] == 0) grad[i] = -T(1) / (static_cast<T>(n) * clamp_prob(d[i]));
  }
  return grad;
}

/// Mean cross-entropy of (B, S) subject probabilities against the uniform
/// distribution: the identity-discriminator counterpart of `adversarial`.
template <std::floating_point T>
T uniform_target(std::span<const T> probs, std::size_t classes) {
  if (classes == 0 || probs.size() % classes != 0) throw Error("uniform-target loss: shape mismatch");
  const std::size_t rows = probs.size() / classes;
  if (rows == 0) return T(0);
  double acc = 0.0;
  for (T p : probs) acc -= std::log(clamp_prob(p));
  return static_cast<T>(acc / static_cast<double>(classes * rows));
}

template <std::floating_point T>
std::vector<T> uniform_target_grad(std::span<const T> probs, std::size_t classes) {
  if (classes == 0 || probs.size() % classes != 0) throw Error("uniform-target loss: shape mismatch");
  const T scale = T(1) / static_cast<T>(probs.size());
  std::vector<T> grad(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) grad[i] = -scale / clamp_prob(probs[i]);
  return grad;
}

// Per-step objectives.

enum class Step { kStep1, kStep2, kStep3Generator, kStep3Discriminator };

struct Components {
  std::optional<double> reconstruction;
  std::optional<double> classification;
  std::optional<double> discrimination;
  std::optional<double> adversarial;
};

/// Objective each block minimises; empty for blocks the step leaves alone.
struct BlockObjectives {
  std::optional<double> feature;
  std::optional<double> reconstructor;
  std::optional<double> classifier;
  std::optional<double> discriminator;
};

inline double require(const std::optional<double>& v, const char* name, Step step) {
  if (!v) {
    throw Error(std::string("step ") + std::to_string(static_cast<int>(step)) + " objective needs the " + name +
                " loss");
  }
  return *v;
}

inline double generator_objective(double adversarial, double reconstruction, double classification,
                                  const LossWeights& w) {
  return w.adversarial * adversarial + w.reconstruction * reconstruction + w.classification * classification;
}

inline BlockObjectives step_objectives(Step step, const Components& c, const LossWeights& w = {}) {
  BlockObjectives out;
  switch (step) {
    case Step::kStep1: {
      const double lr = require(c.reconstruction, "reconstruction", step);
      out.feature = lr;
      out.reconstructor = lr;
      break;
    }
    case Step::kStep2: {
      const double lr = require(c.reconstruction, "reconstruction", step);
      const double lc = require(c.classification, "classification", step);
      out.feature = lr + lc;
      out.reconstructor = lr;
      out.classifier = lc;
      out.discriminator = require(c.discrimination, "discrimination", step);
      break;
    }
    case Step::kStep3Generator: {
      const double total = generator_objective(require(c.adversarial, "adversarial", step),
                                               require(c.reconstruction, "reconstruction", step),
                                               require(c.classification, "classification", step), w);
      out.feature = total;
      out.classifier = total;
      break;
    }
    case Step::kStep3Discriminator:
      out.discriminator = require(c.discrimination, "discrimination", step);
      break;
  }
  return out;
}

/// The step-3.1 objective and its gradients with respect to the three
/// network outputs it reads: reconstruction, class probabilities and the
/// discriminator outputs on the pair batch.
template <std::floating_point T>
struct GeneratorObjective {
  T value;
  std::vector<T> d_reconstruction;
  std::vector<T> d_probs;
  std::vector<T> d_disc;
};

template <std::floating_point T>
GeneratorObjective<T> generator_objective_grad(std::span<const T> recon, std::span<const T> target,
                                               std::span<const T> probs, std::span<const int> labels,
                                               std::size_t classes, std::span<const T> disc,
                                               std::span<const int> g, const LossWeights& w) {
  GeneratorObjective<T> out;
  out.value = static_cast<T>(generator_objective(adversarial(disc, g), reconstruction(recon, target),
                                                 classification(probs, labels, classes), w));
  out.d_reconstruction = reconstruction_grad(recon, target);
  for (T& v : out.d_reconstruction) v *= static_cast<T>(w.reconstruction);
  out.d_probs = classification_grad(probs, labels, classes);
  for (T& v : out.d_probs) v *= static_cast<T>(w.classification);
  out.d_disc = adversarial_grad(disc, g);
  for (T& v : out.d_disc) v *= static_cast<T>(w.adversarial);
  return out;
}

}  // namespace advhar::loss
