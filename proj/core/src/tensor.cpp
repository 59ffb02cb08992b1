// SPDX-License-Identifier: Apache-2.0
#include "advhar/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "advhar/error.hpp"

namespace advhar::nn {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::span<const float> values)
    : Tensor(std::move(shape), FloatBuffer(values.begin(), values.end())) {}

Tensor::Tensor(std::vector<std::size_t> shape, FloatBuffer values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != product(shape_)) {
    throw SchemaError("tensor value count " + std::to_string(data_.size()) +
                      " does not match shape " + shape_string(shape_));
  }
}

std::size_t Tensor::item_size() const {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return data_.size() / shape_[0];
}

void Tensor::reshape(std::vector<std::size_t> shape) {
  if (product(shape) != data_.size()) {
    throw SchemaError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > shape_.at(0)) throw SchemaError("tensor slice out of range");
  std::vector<std::size_t> shape = shape_;
  shape[0] = end - begin;
  const std::size_t item = item_size();
  FloatBuffer values(data_.begin() + static_cast<std::ptrdiff_t>(begin * item),
                            data_.begin() + static_cast<std::ptrdiff_t>(end * item));
  return Tensor(std::move(shape), std::move(values));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  std::vector<std::size_t> shape = parts.front().shape();
  std::size_t batch = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw SchemaError("concat_batch: item shapes differ");
    }
    batch += p.dim(0);
  }
  shape[0] = batch;
  Tensor out(shape);
  float* dst = out.data();
  for (const Tensor& p : parts) dst = std::copy(p.data(), p.data() + p.size(), dst);
  return out;
}

Tensor concat_features(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw SchemaError("concat_features expects two (B, N) tensors with equal B");
  }
  const std::size_t batch = a.dim(0), na = a.dim(1), nb = b.dim(1);
  Tensor out({batch, na + nb});
  for (std::size_t i = 0; i < batch; ++i) {
    std::copy_n(a.data() + i * na, na, out.data() + i * (na + nb));
    std::copy_n(b.data() + i * nb, nb, out.data() + i * (na + nb) + na);
  }
  return out;
}

std::pair<Tensor, Tensor> split_features(const Tensor& joined) {
  if (joined.rank() != 2 || joined.dim(1) % 2 != 0) {
    throw SchemaError("split_features expects (B, 2N)");
  }
  const std::size_t batch = joined.dim(0), half = joined.dim(1) / 2;
  Tensor a({batch, half}), b({batch, half});
  for (std::size_t i = 0; i < batch; ++i) {
    std::copy_n(joined.data() + i * 2 * half, half, a.data() + i * half);
    std::copy_n(joined.data() + i * 2 * half + half, half, b.data() + i * half);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace advhar::nn
