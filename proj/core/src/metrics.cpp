// SPDX-License-Identifier: Apache-2.0
#include "advhar/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "advhar/error.hpp"

namespace advhar {

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts)
    : classes_(classes), counts_(std::move(counts)) {
  if (counts_.size() != classes * classes) throw DataError("confusion matrix needs K*K counts");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= classes_ || predicted >= classes_) throw DataError("class index outside the confusion matrix");
  counts_[truth * classes_ + predicted] += n;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

ClassificationMetrics metrics_from_confusion(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  const std::uint64_t total = cm.total();
  if (total == 0) throw DataError("metrics of an empty confusion matrix");
  ClassificationMetrics m;
  m.per_class_f1.assign(k, 0.0);
  std::uint64_t correct = 0;
  double weighted = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t support = 0, predicted = 0;
    for (std::size_t j = 0; j < k; ++j) {
      support += cm.at(c, j);
      predicted += cm.at(j, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    correct += tp;
    // 2PR/(P+R) = 2tp / (support + predicted); zero when both are empty or tp = 0.
    const double f1 = support + predicted > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(support + predicted) : 0.0;
    m.per_class_f1[c] = f1;
    weighted += f1 * static_cast<double>(support);
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  m.f1_macro = std::accumulate(m.per_class_f1.begin(), m.per_class_f1.end(), 0.0) / static_cast<double>(k);
  m.f1_weighted = weighted / static_cast<double>(total);
  return m;
}

std::vector<std::size_t> argmax_rows(const std::vector<float>& probs, std::size_t classes) {
  std::vector<std::size_t> out(probs.size() / classes);
  for (std::size_t b = 0; b < out.size(); ++b) {
    const auto first = probs.begin() + static_cast<std::ptrdiff_t>(b * classes);
    out[b] = static_cast<std::size_t>(std::max_element(first, first + static_cast<std::ptrdiff_t>(classes)) - first);
  }
  return out;
}

}  // namespace advhar
