// SPDX-License-Identifier: Apache-2.0
#include "advhar/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advhar/error.hpp"

namespace advhar::nn {

namespace {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<Eigen::VectorXf>;

void require_rank(const Tensor& x, std::size_t rank, const char* layer) {
  if (x.rank() != rank) {
    throw SchemaError(std::string(layer) + ": expected rank-" + std::to_string(rank) +
                      " input, got " + shape_string(x.shape()));
  }
}

// cols(c*K + j, col0 + t) = signal(c, t*stride - padding + j*dilation), zero outside.
void gather(const float* signal, std::size_t channels, std::size_t long_len, std::size_t short_len,
            const ConvGeometry& g, float* cols, std::size_t ld, std::size_t col0) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto len = static_cast<std::ptrdiff_t>(long_len);
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = signal + c * long_len;
    for (std::size_t j = 0; j < g.kernel; ++j) {
      float* row = cols + (c * g.kernel + j) * ld + col0;
      const auto offset = static_cast<std::ptrdiff_t>(j * g.dilation) - pad;
      for (std::size_t t = 0; t < short_len; ++t) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * g.stride) + offset;
        row[t] = (pos >= 0 && pos < len) ? src[pos] : 0.0f;
      }
    }
  }
}

// Adjoint of gather: signal(c, pos) += cols(c*K + j, col0 + t).
void scatter(const float* cols, std::size_t ld, std::size_t col0, std::size_t channels,
             std::size_t long_len, std::size_t short_len, const ConvGeometry& g, float* signal) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto len = static_cast<std::ptrdiff_t>(long_len);
  for (std::size_t c = 0; c < channels; ++c) {
    float* dst = signal + c * long_len;
    for (std::size_t j = 0; j < g.kernel; ++j) {
      const float* row = cols + (c * g.kernel + j) * ld + col0;
      const auto offset = static_cast<std::ptrdiff_t>(j * g.dilation) - pad;
      for (std::size_t t = 0; t < short_len; ++t) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * g.stride) + offset;
        if (pos >= 0 && pos < len) dst[pos] += row[t];
      }
    }
  }
}

// (B, C, L) tensor -> (C, B*L) matrix and back.
Mat to_channel_major(const Tensor& x) {
  const std::size_t batch = x.dim(0), channels = x.dim(1), length = x.dim(2);
  Mat m(channels, batch * length);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(x.data() + (b * channels + c) * length, length, m.data() + c * batch * length + b * length);
    }
  }
  return m;
}

Tensor from_channel_major(const Mat& m, std::size_t batch, std::size_t length) {
  const auto channels = static_cast<std::size_t>(m.rows());
  Tensor x({batch, channels, length});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(m.data() + c * batch * length + b * length, length, x.data() + (b * channels + c) * length);
    }
  }
  return x;
}

}  // namespace

Parameter::Parameter(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
  const std::size_t count =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  value.assign(count, 0.0f);
  grad.assign(count, 0.0f);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in, std::size_t out)
    : in_(in), out_(out), weight_("weight", {out, in}), bias_("bias", {out}) {}

Tensor Linear::forward(const Tensor& x, const ForwardContext&, LayerCache& cache) const {
  require_rank(x, 2, "Linear");
  if (x.dim(1) != in_) {
    throw SchemaError("Linear: expected " + std::to_string(in_) + " features, got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  Tensor y({batch, out_});
  ConstMatMap X(x.data(), batch, in_);
  ConstMatMap W(weight_.value.data(), out_, in_);
  MatMap Y(y.data(), batch, out_);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias_.value.data(), out_);
  cache.input = x;
  return y;
}

Tensor Linear::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  const std::size_t batch = grad_out.dim(0);
  ConstMatMap dY(grad_out.data(), batch, out_);
  if (mode.parameters) {
    ConstMatMap X(cache.input.data(), batch, in_);
    MatMap dW(weight_.grad.data(), out_, in_);
    dW.noalias() += dY.transpose() * X;
    Eigen::Map<Eigen::RowVectorXf>(bias_.grad.data(), out_) += dY.colwise().sum();
  }
  if (!mode.input) return {};
  Tensor dx({batch, in_});
  MatMap dX(dx.data(), batch, in_);
  dX.noalias() = dY * ConstMatMap(weight_.value.data(), out_, in_);
  return dx;
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry)
    : in_(in_channels),
      out_(out_channels),
      geometry_(geometry),
      weight_("weight", {out_channels, in_channels, geometry.kernel}),
      bias_("bias", {out_channels}) {}

std::size_t Conv1d::output_length(std::size_t length) const {
  const std::size_t span = geometry_.dilation * (geometry_.kernel - 1) + 1;
  const std::size_t padded = length + 2 * geometry_.padding;
  if (padded < span) return 0;
  return (padded - span) / geometry_.stride + 1;
}

Tensor Conv1d::forward(const Tensor& x, const ForwardContext&, LayerCache& cache) const {
  require_rank(x, 3, "Conv1d");
  if (x.dim(1) != in_) {
    throw SchemaError("Conv1d: expected " + std::to_string(in_) + " channels, got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), length = x.dim(2);
  const std::size_t out_len = output_length(length);
  if (out_len == 0) throw SchemaError("Conv1d: input length " + std::to_string(length) + " shorter than kernel span");
  const std::size_t cols_n = batch * out_len, rows = in_ * geometry_.kernel;
  Mat cols(rows, cols_n);
  for (std::size_t b = 0; b < batch; ++b) {
    gather(x.data() + b * in_ * length, in_, length, out_len, geometry_, cols.data(), cols_n, b * out_len);
  }
  Mat y(out_, cols_n);
  y.noalias() = ConstMatMap(weight_.value.data(), out_, rows) * cols;
  y.colwise() += Eigen::Map<const Eigen::VectorXf>(bias_.value.data(), out_);
  cache.input = x;
  return from_channel_major(y, batch, out_len);
}

Tensor Conv1d::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  const Tensor& x = cache.input;
  const std::size_t batch = x.dim(0), length = x.dim(2), out_len = grad_out.dim(2);
  const std::size_t cols_n = batch * out_len, rows = in_ * geometry_.kernel;
  const Mat dy = to_channel_major(grad_out);
  ConstMatMap W(weight_.value.data(), out_, rows);
  if (mode.parameters) {
    Mat cols(rows, cols_n);
    for (std::size_t b = 0; b < batch; ++b) {
      gather(x.data() + b * in_ * length, in_, length, out_len, geometry_, cols.data(), cols_n, b * out_len);
    }
    MatMap(weight_.grad.data(), out_, rows).noalias() += dy * cols.transpose();
    VecMap(bias_.grad.data(), out_) += dy.rowwise().sum();
  }
  if (!mode.input) return {};
  Mat dcols(rows, cols_n);
  dcols.noalias() = W.transpose() * dy;
  Tensor dx({batch, in_, length});
  for (std::size_t b = 0; b < batch; ++b) {
    scatter(dcols.data(), cols_n, b * out_len, in_, length, out_len, geometry_, dx.data() + b * in_ * length);
  }
  return dx;
}

// ---------------------------------------------------------------- ConvTranspose1d

ConvTranspose1d::ConvTranspose1d(std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry,
                                 std::size_t output_padding)
    : in_(in_channels),
      out_(out_channels),
      geometry_(geometry),
      output_padding_(output_padding),
      weight_("weight", {in_channels, out_channels, geometry.kernel}),
      bias_("bias", {out_channels}) {}

std::size_t ConvTranspose1d::output_length(std::size_t length) const {
  const auto raw = static_cast<std::ptrdiff_t>((length - 1) * geometry_.stride) -
                   2 * static_cast<std::ptrdiff_t>(geometry_.padding) +
                   static_cast<std::ptrdiff_t>(geometry_.dilation * (geometry_.kernel - 1) + output_padding_ + 1);
  return raw > 0 ? static_cast<std::size_t>(raw) : 0;
}

Tensor ConvTranspose1d::forward(const Tensor& x, const ForwardContext&, LayerCache& cache) const {
  require_rank(x, 3, "ConvTranspose1d");
  if (x.dim(1) != in_) {
    throw SchemaError("ConvTranspose1d: expected " + std::to_string(in_) + " channels, got " +
                      shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), length = x.dim(2);
  const std::size_t out_len = output_length(length);
  if (out_len == 0) throw SchemaError("ConvTranspose1d: empty output");
  const std::size_t cols_n = batch * length, rows = out_ * geometry_.kernel;
  const Mat xm = to_channel_major(x);
  Mat cols(rows, cols_n);
  cols.noalias() = ConstMatMap(weight_.value.data(), in_, rows).transpose() * xm;
  Tensor y({batch, out_, out_len});
  for (std::size_t b = 0; b < batch; ++b) {
    scatter(cols.data(), cols_n, b * length, out_, out_len, length, geometry_, y.data() + b * out_ * out_len);
    for (std::size_t o = 0; o < out_; ++o) {
      float* row = y.data() + (b * out_ + o) * out_len;
      const float bias = bias_.value[o];
      for (std::size_t t = 0; t < out_len; ++t) row[t] += bias;
    }
  }
  cache.input = x;
  return y;
}

Tensor ConvTranspose1d::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  const Tensor& x = cache.input;
  const std::size_t batch = x.dim(0), length = x.dim(2), out_len = grad_out.dim(2);
  const std::size_t cols_n = batch * length, rows = out_ * geometry_.kernel;
  Mat g(rows, cols_n);
  for (std::size_t b = 0; b < batch; ++b) {
    gather(grad_out.data() + b * out_ * out_len, out_, out_len, length, geometry_, g.data(), cols_n, b * length);
  }
  if (mode.parameters) {
    const Mat xm = to_channel_major(x);
    MatMap(weight_.grad.data(), in_, rows).noalias() += xm * g.transpose();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < out_; ++o) {
        const float* row = grad_out.data() + (b * out_ + o) * out_len;
        double s = 0.0;
        for (std::size_t t = 0; t < out_len; ++t) s += row[t];
        bias_.grad[o] += static_cast<float>(s);
      }
    }
  }
  if (!mode.input) return {};
  Mat dxm(in_, cols_n);
  dxm.noalias() = ConstMatMap(weight_.value.data(), in_, rows) * g;
  return from_channel_major(dxm, batch, length);
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, float momentum, float eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_("gamma", {channels}),
      beta_("beta", {channels}),
      running_mean_(channels, 0.0f),
      running_var_(channels, 1.0f) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
}

Tensor BatchNorm::forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const {
  if ((x.rank() != 2 && x.rank() != 3) || x.dim(1) != channels_) {
    throw SchemaError("BatchNorm: expected (B, " + std::to_string(channels_) + "[, L]), got " +
                      shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), length = x.rank() == 3 ? x.dim(2) : 1;
  const std::size_t count = batch * length;
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  cache.inv_std.assign(channels_, 0.0f);
  const bool training = ctx.phase == Phase::kTrain;
  if (training) {
    cache.mean.assign(channels_, 0.0f);
    cache.var.assign(channels_, 0.0f);
  } else {
    cache.mean.clear();
    cache.var.clear();
  }
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean = running_mean_[c], var = running_var_[c];
    if (training) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const float* row = x.data() + (b * channels_ + c) * length;
        for (std::size_t t = 0; t < length; ++t) sum += row[t];
      }
      mean = sum / static_cast<double>(count);
      for (std::size_t b = 0; b < batch; ++b) {
        const float* row = x.data() + (b * channels_ + c) * length;
        for (std::size_t t = 0; t < length; ++t) sq += (row[t] - mean) * (row[t] - mean);
      }
      var = sq / static_cast<double>(count);
      cache.mean[c] = static_cast<float>(mean);
      cache.var[c] = static_cast<float>(var);
    }
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    cache.inv_std[c] = static_cast<float>(inv_std);
    const float g = gamma_.value[c], bt = beta_.value[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels_ + c) * length;
      for (std::size_t t = 0; t < length; ++t) {
        const auto h = static_cast<float>((x[off + t] - mean) * inv_std);
        xhat[off + t] = h;
        y[off + t] = g * h + bt;
      }
    }
  }
  cache.aux = std::move(xhat);
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  const Tensor& xhat = cache.aux;
  const std::size_t batch = xhat.dim(0), length = xhat.rank() == 3 ? xhat.dim(2) : 1;
  const auto count = static_cast<double>(batch * length);
  const bool training = !cache.mean.empty();
  Tensor dx(xhat.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels_ + c) * length;
      for (std::size_t t = 0; t < length; ++t) {
        sum_dy += grad_out[off + t];
        sum_dy_xhat += static_cast<double>(grad_out[off + t]) * xhat[off + t];
      }
    }
    if (mode.parameters) {
      gamma_.grad[c] += static_cast<float>(sum_dy_xhat);
      beta_.grad[c] += static_cast<float>(sum_dy);
    }
    if (!mode.input) continue;
    const double scale = gamma_.value[c] * static_cast<double>(cache.inv_std[c]);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels_ + c) * length;
      for (std::size_t t = 0; t < length; ++t) {
        if (training) {
          dx[off + t] = static_cast<float>(scale / count *
                                           (count * grad_out[off + t] - sum_dy - xhat[off + t] * sum_dy_xhat));
        } else {
          dx[off + t] = static_cast<float>(scale * grad_out[off + t]);
        }
      }
    }
  }
  if (!mode.input) return {};
  return dx;
}

void BatchNorm::update_running(const LayerCache& cache) {
  if (cache.mean.empty()) return;
  const Tensor& xhat = cache.aux;
  const std::size_t count = xhat.dim(0) * (xhat.rank() == 3 ? xhat.dim(2) : 1);
  const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
  for (std::size_t c = 0; c < channels_; ++c) {
    running_mean_[c] = (1.0f - momentum_) * running_mean_[c] + momentum_ * cache.mean[c];
    running_var_[c] =
        (1.0f - momentum_) * running_var_[c] + momentum_ * static_cast<float>(cache.var[c] * unbias);
  }
}

// ---------------------------------------------------------------- Activation

Tensor Activation::forward(const Tensor& x, const ForwardContext&, LayerCache& cache) const {
  Tensor y(x.shape());
  switch (kind_) {
    case ActivationKind::kReLU:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
      cache.input = x;
      break;
    case ActivationKind::kLeakyReLU:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : slope_ * x[i];
      cache.input = x;
      break;
    case ActivationKind::kSigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
      cache.output = y;
      break;
  }
  return y;
}

Tensor Activation::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  if (!mode.input) return {};
  Tensor dx(grad_out.shape());
  switch (kind_) {
    case ActivationKind::kReLU:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = cache.input[i] > 0.0f ? grad_out[i] : 0.0f;
      break;
    case ActivationKind::kLeakyReLU:
      for (std::size_t i = 0; i < dx.size(); ++i) {
        dx[i] = cache.input[i] > 0.0f ? grad_out[i] : slope_ * grad_out[i];
      }
      break;
    case ActivationKind::kSigmoid:
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const float s = cache.output[i];
        dx[i] = grad_out[i] * s * (1.0f - s);
      }
      break;
  }
  return dx;
}

// ---------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, const ForwardContext& ctx, LayerCache& cache) const {
  if (ctx.phase != Phase::kTrain || rate_ <= 0.0f) {
    cache.aux = Tensor();
    return x;
  }
  if (ctx.rng == nullptr) throw ConfigError("Dropout: training phase requires an rng");
  const float keep = 1.0f - rate_;
  std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
  Tensor mask(x.shape());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = uniform(*ctx.rng) < keep ? 1.0f / keep : 0.0f;
    y[i] = x[i] * mask[i];
  }
  cache.aux = std::move(mask);
  return y;
}

Tensor Dropout::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  if (!mode.input) return {};
  if (cache.aux.empty()) return grad_out;
  Tensor dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * cache.aux[i];
  return dx;
}

// ---------------------------------------------------------------- Softmax

Tensor Softmax::forward(const Tensor& x, const ForwardContext&, LayerCache& cache) const {
  require_rank(x, 2, "Softmax");
  const std::size_t batch = x.dim(0), k = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const float* in = x.data() + b * k;
    float* out = y.data() + b * k;
    const float peak = *std::max_element(in, in + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[j] = std::exp(in[j] - peak);
      total += out[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[j] = static_cast<float>(out[j] / total);
  }
  cache.output = y;
  return y;
}

Tensor Softmax::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  if (!mode.input) return {};
  const std::size_t batch = grad_out.dim(0), k = grad_out.dim(1);
  Tensor dx(grad_out.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const float* y = cache.output.data() + b * k;
    const float* dy = grad_out.data() + b * k;
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += static_cast<double>(dy[j]) * y[j];
    for (std::size_t j = 0; j < k; ++j) dx[b * k + j] = static_cast<float>(y[j] * (dy[j] - dot));
  }
  return dx;
}

// ---------------------------------------------------------------- reshaping

Tensor Flatten::forward(const Tensor& x, const ForwardContext&, LayerCache& cache) const {
  require_rank(x, 3, "Flatten");
  cache.input_shape = x.shape();
  Tensor y = x;
  y.reshape({x.dim(0), x.dim(1) * x.dim(2)});
  return y;
}

Tensor Flatten::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  if (!mode.input) return {};
  Tensor dx = grad_out;
  dx.reshape(cache.input_shape);
  return dx;
}

Tensor Unflatten::forward(const Tensor& x, const ForwardContext&, LayerCache& cache) const {
  require_rank(x, 2, "Unflatten");
  if (x.dim(1) != channels_ * length_) {
    throw SchemaError("Unflatten: expected " + std::to_string(channels_ * length_) + " features, got " +
                      shape_string(x.shape()));
  }
  cache.input_shape = x.shape();
  Tensor y = x;
  y.reshape({x.dim(0), channels_, length_});
  return y;
}

Tensor Unflatten::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  if (!mode.input) return {};
  Tensor dx = grad_out;
  dx.reshape(cache.input_shape);
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, const ForwardContext&, LayerCache& cache) const {
  require_rank(x, 3, "GlobalAvgPool");
  const std::size_t batch = x.dim(0), channels = x.dim(1), length = x.dim(2);
  Tensor y({batch, channels});
  for (std::size_t i = 0; i < batch * channels; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < length; ++t) s += x[i * length + t];
    y[i] = static_cast<float>(s / static_cast<double>(length));
  }
  cache.input_shape = x.shape();
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, const LayerCache& cache, GradMode mode) {
  if (!mode.input) return {};
  Tensor dx(cache.input_shape);
  const std::size_t length = cache.input_shape[2];
  const float scale = 1.0f / static_cast<float>(length);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    for (std::size_t t = 0; t < length; ++t) dx[i * length + t] = grad_out[i] * scale;
  }
  return dx;
}

}  // namespace advhar::nn
