// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace advhar {

/// K x K counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}
  ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts);

  std::size_t classes() const noexcept { return classes_; }
  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  std::uint64_t total() const;
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double f1_macro = 0.0;
  double f1_weighted = 0.0;
  std::vector<double> per_class_f1;
};

/// Accuracy = trace / total. Per-class F1 = 2PR / (P + R), or 0 when
/// P + R = 0; macro is the unweighted class mean, weighted uses the row
/// supports as weights. Throws DataError for an empty matrix.
ClassificationMetrics metrics_from_confusion(const ConfusionMatrix& cm);

/// Index of the largest entry in each row of a (B, K) matrix.
std::vector<std::size_t> argmax_rows(const std::vector<float>& probs, std::size_t classes);

}  // namespace advhar
