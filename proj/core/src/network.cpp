// SPDX-License-Identifier: Apache-2.0
#include "advhar/network.hpp"

#include <cmath>
#include <random>

#include "advhar/digest.hpp"
#include "advhar/error.hpp"

namespace advhar::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

ConvGeometry geometry_of(const LayerDesc& d) { return {d.kernel, d.stride, d.padding, d.dilation}; }

Layer make_layer(const LayerDesc& d) {
  switch (d.kind) {
    case LayerKind::kLinear: return Linear(d.in, d.out);
    case LayerKind::kConv1d: return Conv1d(d.in, d.out, geometry_of(d));
    case LayerKind::kConvTranspose1d: return ConvTranspose1d(d.in, d.out, geometry_of(d), d.output_padding);
    case LayerKind::kBatchNorm: return BatchNorm(d.out);
    case LayerKind::kReLU: return Activation(ActivationKind::kReLU);
    case LayerKind::kLeakyReLU: return Activation(ActivationKind::kLeakyReLU, d.slope);
    case LayerKind::kSigmoid: return Activation(ActivationKind::kSigmoid);
    case LayerKind::kDropout: return Dropout(d.rate);
    case LayerKind::kSoftmax: return Softmax();
    case LayerKind::kFlatten: return Flatten();
    case LayerKind::kUnflatten: return Unflatten(d.out, d.length);
    case LayerKind::kGlobalAvgPool: return GlobalAvgPool();
  }
  throw ConfigError("unknown layer kind");
}

std::size_t fan_in_of(const LayerDesc& d) {
  switch (d.kind) {
    case LayerKind::kLinear: return d.in;
    case LayerKind::kConv1d: return d.in * d.kernel;
    case LayerKind::kConvTranspose1d: return d.out * d.kernel;
    default: return 0;
  }
}

std::vector<long> render(const std::vector<std::size_t>& item, ShapeNotation notation) {
  std::vector<long> dims;
  for (std::size_t v : item) dims.push_back(static_cast<long>(v));
  if (item.size() == 1) {
    switch (notation) {
      case ShapeNotation::kChannelsHeightWidth: return {1, 1, dims[0]};
      default: return {-1, dims[0]};
    }
  }
  if (item.size() == 2) {
    switch (notation) {
      case ShapeNotation::kChannelsHeightWidth: return {dims[0], 1, dims[1]};
      case ShapeNotation::kHeightChannelsWidth: return {1, dims[0], dims[1]};
      case ShapeNotation::kPlain: return dims;
    }
  }
  return dims;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kLinear: return "Linear";
    case LayerKind::kConv1d: return "Conv1d";
    case LayerKind::kConvTranspose1d: return "ConvTranspose1d";
    case LayerKind::kBatchNorm: return "BatchNorm";
    case LayerKind::kReLU: return "ReLU";
    case LayerKind::kLeakyReLU: return "LeakyReLU";
    case LayerKind::kSigmoid: return "Sigmoid";
    case LayerKind::kDropout: return "Dropout";
    case LayerKind::kSoftmax: return "Softmax";
    case LayerKind::kFlatten: return "Flatten";
    case LayerKind::kUnflatten: return "Unflatten";
    case LayerKind::kGlobalAvgPool: return "GlobalAvgPool";
  }
  return "?";
}

std::size_t parameter_count(const NetworkSpec& spec) {
  std::size_t total = 0;
  for (const LayerDesc& d : spec.layers) {
    switch (d.kind) {
      case LayerKind::kLinear: total += d.in * d.out + d.out; break;
      case LayerKind::kConv1d:
      case LayerKind::kConvTranspose1d: total += d.in * d.out * d.kernel + d.out; break;
      case LayerKind::kBatchNorm: total += 2 * d.out; break;
      default: break;
    }
  }
  return total;
}

std::uint64_t spec_digest(const NetworkSpec& spec) {
  Digest h;
  h.update(spec.name);
  for (std::size_t v : spec.input_shape) h.update_value(static_cast<std::uint64_t>(v));
  for (const LayerDesc& d : spec.layers) {
    h.update_value(static_cast<std::uint32_t>(d.kind));
    for (std::size_t v : {d.in, d.out, d.kernel, d.stride, d.padding, d.dilation, d.output_padding, d.length}) {
      h.update_value(static_cast<std::uint64_t>(v));
    }
    h.update_value(d.rate);
    h.update_value(d.slope);
  }
  return h.value();
}

std::string format_dims(const std::vector<long>& dims) {
  std::string out = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(dims[i]);
  }
  return out + "]";
}

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  std::mt19937_64 rng(seed);
  layers_.reserve(spec_.layers.size());
  for (const LayerDesc& d : spec_.layers) {
    Layer layer = make_layer(d);
    const std::size_t fan_in = fan_in_of(d);
    if (fan_in > 0) {
      const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
      std::uniform_real_distribution<float> uniform(-bound, bound);
      std::visit(overloaded{[&](auto& l) {
                   if constexpr (requires { l.parameters(); }) {
                     Parameter* weight = l.parameters().front();
                     for (float& w : weight->value) w = uniform(rng);
                   }
                 }},
                 layer);
    }
    layers_.push_back(std::move(layer));
  }
}

Tensor Network::forward(const Tensor& x, const ForwardContext& ctx, Tape* tape) {
  if (tape) {
    tape->clear();
    tape->resize(layers_.size());
  }
  LayerCache scratch;
  Tensor current = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerCache& cache = tape ? (*tape)[i] : scratch;
    current = std::visit([&](const auto& l) { return l.forward(current, ctx, cache); }, layers_[i]);
    if (ctx.phase == Phase::kTrain && ctx.update_running_stats) {
      if (auto* bn = std::get_if<BatchNorm>(&layers_[i])) bn->update_running(cache);
    }
  }
  return current;
}

Tensor Network::predict(const Tensor& x) const {
  const ForwardContext ctx{Phase::kEval, false, nullptr};
  LayerCache scratch;
  Tensor current = x;
  for (const Layer& layer : layers_) {
    current = std::visit([&](const auto& l) { return l.forward(current, ctx, scratch); }, layer);
  }
  return current;
}

Tensor Network::backward(const Tensor& grad, const Tape& tape, GradMode mode) {
  if (tape.size() != layers_.size()) throw ConfigError(spec_.name + ": backward without a matching forward tape");
  Tensor current = grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    // Only the first layer may skip its input gradient.
    const GradMode layer_mode{mode.parameters, i > 0 || mode.input};
    current = std::visit([&](auto& l) { return l.backward(current, tape[i], layer_mode); }, layers_[i]);
  }
  return current;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (Layer& layer : layers_) {
    std::visit(
        [&](auto& l) {
          if constexpr (requires { l.parameters(); }) {
            for (Parameter* p : l.parameters()) out.push_back(p);
          }
        },
        layer);
  }
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  std::vector<const Parameter*> out;
  for (const Layer& layer : layers_) {
    std::visit(
        [&](const auto& l) {
          if constexpr (requires { l.parameters(); }) {
            for (const Parameter* p : l.parameters()) out.push_back(p);
          }
        },
        layer);
  }
  return out;
}

std::vector<std::vector<float>*> Network::buffers() {
  std::vector<std::vector<float>*> out;
  for (Layer& layer : layers_) {
    if (auto* bn = std::get_if<BatchNorm>(&layer)) {
      for (auto* b : bn->buffers()) out.push_back(b);
    }
  }
  return out;
}

std::vector<const std::vector<float>*> Network::buffers() const {
  std::vector<const std::vector<float>*> out;
  for (const Layer& layer : layers_) {
    if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      for (const auto* b : bn->buffers()) out.push_back(b);
    }
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const Parameter* p : parameters()) total += p->size();
  return total;
}

std::uint64_t Network::parameter_digest() const {
  Digest h;
  for (const Parameter* p : parameters()) h.update_values(std::span<const float>(p->value));
  return h.value();
}

std::uint64_t Network::state_digest() const {
  Digest h;
  for (const Parameter* p : parameters()) h.update_values(std::span<const float>(p->value));
  for (const auto* b : buffers()) h.update_values(std::span<const float>(*b));
  return h.value();
}

std::vector<LayerShape> Network::trace_shapes(const Tensor& x) const {
  const ForwardContext ctx{Phase::kEval, false, nullptr};
  std::vector<LayerShape> out;
  LayerCache scratch;
  Tensor current = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    current = std::visit([&](const auto& l) { return l.forward(current, ctx, scratch); }, layers_[i]);
    const LayerDesc& d = spec_.layers[i];
    if (!d.label.empty()) {
      std::vector<std::size_t> item(current.shape().begin() + 1, current.shape().end());
      out.push_back({d.label, render(item, spec_.notation)});
    }
  }
  return out;
}

}  // namespace advhar::nn
