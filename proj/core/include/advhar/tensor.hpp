// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdlib>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace advhar::nn {

/// Allocator with a fixed 64-byte alignment. Vectorized kernels take
/// different (scalar prologue, packet body) splits depending on where a
/// buffer starts; a fixed alignment keeps float results bit-reproducible
/// from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlignment = 64;

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + kAlignment - 1) / kAlignment * kAlignment;
    void* p = std::aligned_alloc(kAlignment, bytes == 0 ? kAlignment : bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

/// Dense row-major float tensor. Activations are (batch, channels, length)
/// or (batch, features).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::span<const float> values);
  Tensor(std::vector<std::size_t> shape, FloatBuffer values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Element count of one batch item (product of all but the first dim).
  std::size_t item_size() const;

  /// Reinterprets the shape; the element count must not change.
  void reshape(std::vector<std::size_t> shape);

  /// Rows [begin, end) of the leading dimension.
  Tensor slice(std::size_t begin, std::size_t end) const;

 private:
  std::vector<std::size_t> shape_;
  FloatBuffer data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Stacks tensors of identical item shape along the batch dimension.
Tensor concat_batch(std::span<const Tensor> parts);

/// Concatenates two (B, N) tensors along the feature axis into (B, 2N).
Tensor concat_features(const Tensor& a, const Tensor& b);

/// Inverse of concat_features for the gradient: splits (B, 2N) into halves.
std::pair<Tensor, Tensor> split_features(const Tensor& joined);

}  // namespace advhar::nn
