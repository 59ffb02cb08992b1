// SPDX-License-Identifier: Apache-2.0
#include "advhar/optim.hpp"

#include <cmath>
#include <utility>

namespace advhar::nn {

void Adam::step(Network& net) {
  std::vector<Parameter*> params = net.parameters();
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->size(), 0.0f);
      v_.emplace_back(p->size(), 0.0f);
    }
  }
  ++step_;
  const double bias1 = 1.0 - std::pow(static_cast<double>(options_.beta1), static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(static_cast<double>(options_.beta2), static_cast<double>(step_));
  const auto step_size = static_cast<float>(options_.learning_rate / bias1);
  const auto bias2_sqrt = static_cast<float>(std::sqrt(bias2));
  const float b1 = options_.beta1, b2 = options_.beta2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    std::vector<float>& m = m_[i];
    std::vector<float>& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const float g = p.grad[j];
      m[j] = b1 * m[j] + (1.0f - b1) * g;
      v[j] = b2 * v[j] + (1.0f - b2) * g * g;
      p.value[j] -= step_size * m[j] / (std::sqrt(v[j]) / bias2_sqrt + options_.eps);
    }
  }
}

void sgd_step(Network& net, float learning_rate) {
  for (Parameter* p : net.parameters()) {
    for (std::size_t j = 0; j < p->size(); ++j) p->value[j] -= learning_rate * p->grad[j];
  }
}

double clip_grad_norm(std::vector<Network*> nets, double max_norm) {
  double sq = 0.0;
  for (Network* net : nets) {
    for (const Parameter* p : std::as_const(*net).parameters()) {
      for (float g : p->grad) sq += static_cast<double>(g) * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (Network* net : nets) {
      for (Parameter* p : net->parameters()) {
        for (float& g : p->grad) g *= scale;
      }
    }
  }
  return norm;
}

}  // namespace advhar::nn
