// Copyright 2026 The EegMesh Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// The layer set of the mesh classifier: time-distributed 3x3 convolution,
// batch normalization, ELU, time-distributed flatten, dense, dropout,
// bidirectional LSTM, and the softmax cross-entropy head. Every layer
// implements reverse-mode gradients; matrix products go through Eigen,
// everything else is written out. The scalar type is templated: float for
// training, double for finite-difference verification.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eegmesh/errors.hpp"
#include "eegmesh/rng.hpp"
#include "eegmesh/tensor.hpp"

namespace eegmesh {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<MatRM<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const MatRM<S>>;

/// A learnable tensor and its gradient accumulator.
template <typename S>
struct Param {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  Param() = default;
  Param(std::string n, Tensor<S> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(S{0}); }
};

enum class LayerKind : std::uint8_t {
  TimeDistConv3x3 = 0,
  BatchNorm = 1,
  Elu = 2,
  TimeDistFlatten = 3,
  Dense = 4,
  Dropout = 5,
  BiLstm = 6,
};

template <typename S>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual TensorPtr<S> forward(TensorPtr<S> x, bool train, Rng& rng) = 0;
  virtual Tensor<S> backward(const Tensor<S>& grad_out) = 0;

  virtual std::vector<Param<S>*> params() { return {}; }
  /// Non-learnable state carried across steps (e.g. batch-norm running stats).
  virtual std::vector<Tensor<S>*> buffers() { return {}; }
  virtual LayerKind kind() const = 0;
  virtual std::vector<std::uint32_t> hyper() const { return {}; }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }
};

// ---------------------------------------------------------------------------
// Time-distributed 3x3 convolution, stride 1, zero "same" padding.

template <typename S>
class TimeDistConv3x3 final : public Layer<S> {
 public:
  TimeDistConv3x3(std::int64_t in_channels, std::int64_t out_channels, Rng& rng)
      : cin_(in_channels), cout_(out_channels) {
    const auto fan_in = static_cast<double>(9 * cin_);
    const double limit = 1.0 / std::sqrt(fan_in);
    Tensor<S> w({9 * cin_, cout_});
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<S>(rng.uniform(-limit, limit));
    weight_ = Param<S>("conv.weight", std::move(w));
    bias_ = Param<S>("conv.bias", Tensor<S>({cout_}));
  }

  TensorPtr<S> forward(TensorPtr<S> x, bool /*train*/, Rng& /*rng*/) override {
    check_input(*x);
    input_ = x;
    const auto& s = x->shape();
    const std::int64_t batch = s[0], frames = s[1] * s[2] * s[3];
    Tensor<S> y({s[0], s[1], s[2], s[3], cout_});
    ConstMatMap<S> w(weight_.value.data(), 9 * cin_, cout_);
    for (std::int64_t b = 0; b < batch; ++b) {
      im2col(*x, b);
      ConstMatMap<S> col(col_.data(), frames, 9 * cin_);
      MatMap<S> yb(y.data() + b * frames * cout_, frames, cout_);
      yb.noalias() = col * w;
      ConstMatMap<S> bias(bias_.value.data(), 1, cout_);
      yb.rowwise() += bias.row(0);
    }
    return make_tensor_ptr(std::move(y));
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const auto& s = input_->shape();
    const std::int64_t batch = s[0], frames = s[1] * s[2] * s[3];
    if (gy.shape() != std::vector<std::int64_t>{s[0], s[1], s[2], s[3], cout_})
      throw ShapeMismatch("conv backward shape");
    Tensor<S> gx(s);
    MatMap<S> dw(weight_.grad.data(), 9 * cin_, cout_);
    MatMap<S> db(bias_.grad.data(), 1, cout_);
    ConstMatMap<S> w(weight_.value.data(), 9 * cin_, cout_);
    std::vector<S> dcol(static_cast<std::size_t>(frames) * 9 * cin_);
    for (std::int64_t b = 0; b < batch; ++b) {
      ConstMatMap<S> gyb(gy.data() + b * frames * cout_, frames, cout_);
      im2col(*input_, b);
      ConstMatMap<S> col(col_.data(), frames, 9 * cin_);
      dw.noalias() += col.transpose() * gyb;
      db.row(0) += gyb.colwise().sum();
      MatMap<S> dcol_m(dcol.data(), frames, 9 * cin_);
      dcol_m.noalias() = gyb * w.transpose();
      col2im(dcol, gx, b);
    }
    return gx;
  }

  std::vector<Param<S>*> params() override { return {&weight_, &bias_}; }
  LayerKind kind() const override { return LayerKind::TimeDistConv3x3; }
  std::vector<std::uint32_t> hyper() const override {
    return {static_cast<std::uint32_t>(cin_), static_cast<std::uint32_t>(cout_)};
  }

 private:
  void check_input(const Tensor<S>& x) const {
    if (x.ndim() != 5 || x.dim(4) != cin_)
      throw ShapeMismatch("conv expects [B x T x R x C x " + std::to_string(cin_) + "], got " +
                          Tensor<S>::shape_str(x.shape()));
    if (x.dim(2) < 1 || x.dim(3) < 1) throw ShapeMismatch("conv needs spatial dims >= 1");
  }

  // Patch matrix for one batch item: row (t, r, c), column (kr, kc, ci).
  void im2col(const Tensor<S>& x, std::int64_t b) {
    const std::int64_t t_steps = x.dim(1), rows = x.dim(2), cols = x.dim(3);
    const std::int64_t frames = t_steps * rows * cols;
    col_.assign(static_cast<std::size_t>(frames) * 9 * cin_, S{0});
    const S* xb = x.data() + b * frames * cin_;
    for (std::int64_t t = 0; t < t_steps; ++t) {
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t kr = 0; kr < 3; ++kr) {
          const std::int64_t rr = r + kr - 1;
          if (rr < 0 || rr >= rows) continue;
          for (std::int64_t c = 0; c < cols; ++c) {
            S* dst = col_.data() + (((t * rows + r) * cols + c) * 9 + kr * 3) * cin_;
            const std::int64_t cc0 = c - 1;
            for (std::int64_t kc = 0; kc < 3; ++kc) {
              const std::int64_t cc = cc0 + kc;
              if (cc < 0 || cc >= cols) continue;
              const S* src = xb + ((t * rows + rr) * cols + cc) * cin_;
              std::copy_n(src, cin_, dst + kc * cin_);
            }
          }
        }
      }
    }
  }

  void col2im(const std::vector<S>& dcol, Tensor<S>& gx, std::int64_t b) const {
    const std::int64_t t_steps = gx.dim(1), rows = gx.dim(2), cols = gx.dim(3);
    const std::int64_t frames = t_steps * rows * cols;
    S* gxb = gx.data() + b * frames * cin_;
    for (std::int64_t t = 0; t < t_steps; ++t) {
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t kr = 0; kr < 3; ++kr) {
          const std::int64_t rr = r + kr - 1;
          if (rr < 0 || rr >= rows) continue;
          for (std::int64_t c = 0; c < cols; ++c) {
            const S* src = dcol.data() + (((t * rows + r) * cols + c) * 9 + kr * 3) * cin_;
            for (std::int64_t kc = 0; kc < 3; ++kc) {
              const std::int64_t cc = c - 1 + kc;
              if (cc < 0 || cc >= cols) continue;
              S* dst = gxb + ((t * rows + rr) * cols + cc) * cin_;
              const S* sp = src + kc * cin_;
              for (std::int64_t ci = 0; ci < cin_; ++ci) dst[ci] += sp[ci];
            }
          }
        }
      }
    }
  }

  std::int64_t cin_, cout_;
  Param<S> weight_, bias_;
  TensorPtr<S> input_;
  std::vector<S> col_;
};

// ---------------------------------------------------------------------------
// Batch normalization over the trailing channel dimension.

template <typename S>
class BatchNorm final : public Layer<S> {
 public:
  explicit BatchNorm(std::int64_t channels, double eps = 1e-5, double momentum = 0.1)
      : channels_(channels), eps_(eps), momentum_(momentum) {
    gamma_ = Param<S>("bn.gamma", Tensor<S>::full({channels_}, S{1}));
    beta_ = Param<S>("bn.beta", Tensor<S>({channels_}));
    running_mean_ = Tensor<S>({channels_});
    running_var_ = Tensor<S>::full({channels_}, S{1});
  }

  TensorPtr<S> forward(TensorPtr<S> x, bool train, Rng& /*rng*/) override {
    if (x->ndim() < 2 || x->dim(x->ndim() - 1) != channels_)
      throw ShapeMismatch("batch norm expects trailing dim " + std::to_string(channels_));
    train_ = train;
    const std::int64_t n = x->numel() / channels_;
    Tensor<S> y(x->shape());
    if (train) {
      if (x->dim(0) < 2) throw BatchTooSmall("batch normalization needs batch size >= 2 in train mode");
      mean_.assign(static_cast<std::size_t>(channels_), 0.0);
      inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
      std::vector<double> sum(static_cast<std::size_t>(channels_), 0.0);
      std::vector<double> sumsq(static_cast<std::size_t>(channels_), 0.0);
      const S* xd = x->data();
      for (std::int64_t i = 0; i < n; ++i) {
        const S* row = xd + i * channels_;
        for (std::int64_t c = 0; c < channels_; ++c) {
          const double v = static_cast<double>(row[c]);
          sum[static_cast<std::size_t>(c)] += v;
          sumsq[static_cast<std::size_t>(c)] += v * v;
        }
      }
      for (std::int64_t c = 0; c < channels_; ++c) {
        const double mean = sum[static_cast<std::size_t>(c)] / static_cast<double>(n);
        const double var =
            std::max(0.0, sumsq[static_cast<std::size_t>(c)] / static_cast<double>(n) - mean * mean);
        mean_[static_cast<std::size_t>(c)] = mean;
        inv_std_[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + eps_);
        auto& rm = running_mean_[c];
        auto& rv = running_var_[c];
        rm = static_cast<S>((1.0 - momentum_) * rm + momentum_ * mean);
        rv = static_cast<S>((1.0 - momentum_) * rv + momentum_ * var);
      }
      xhat_ = Tensor<S>(x->shape());
      S* xh = xhat_.data();
      S* yd = y.data();
      for (std::int64_t i = 0; i < n; ++i) {
        const S* row = xd + i * channels_;
        for (std::int64_t c = 0; c < channels_; ++c) {
          const double h = (static_cast<double>(row[c]) - mean_[static_cast<std::size_t>(c)]) *
                           inv_std_[static_cast<std::size_t>(c)];
          xh[i * channels_ + c] = static_cast<S>(h);
          yd[i * channels_ + c] =
              static_cast<S>(static_cast<double>(gamma_.value[c]) * h + static_cast<double>(beta_.value[c]));
        }
      }
      population_ = n;
    } else {
      const S* xd = x->data();
      S* yd = y.data();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t c = 0; c < channels_; ++c) {
          const double scale =
              static_cast<double>(gamma_.value[c]) / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
          yd[i * channels_ + c] = static_cast<S>(
              (static_cast<double>(xd[i * channels_ + c]) - static_cast<double>(running_mean_[c])) * scale +
              static_cast<double>(beta_.value[c]));
        }
    }
    return make_tensor_ptr(std::move(y));
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const std::int64_t n = gy.numel() / channels_;
    Tensor<S> gx(gy.shape());
    if (!train_) {
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t c = 0; c < channels_; ++c) {
          const double scale =
              static_cast<double>(gamma_.value[c]) / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
          gx[i * channels_ + c] = static_cast<S>(static_cast<double>(gy[i * channels_ + c]) * scale);
        }
      return gx;
    }
    std::vector<double> sum_dy(static_cast<std::size_t>(channels_), 0.0);
    std::vector<double> sum_dy_xhat(static_cast<std::size_t>(channels_), 0.0);
    const S* xh = xhat_.data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < channels_; ++c) {
        const double g = static_cast<double>(gy[i * channels_ + c]);
        sum_dy[static_cast<std::size_t>(c)] += g;
        sum_dy_xhat[static_cast<std::size_t>(c)] += g * static_cast<double>(xh[i * channels_ + c]);
      }
    for (std::int64_t c = 0; c < channels_; ++c) {
      gamma_.grad[c] += static_cast<S>(sum_dy_xhat[static_cast<std::size_t>(c)]);
      beta_.grad[c] += static_cast<S>(sum_dy[static_cast<std::size_t>(c)]);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < channels_; ++c) {
        const double g = static_cast<double>(gy[i * channels_ + c]);
        const double h = static_cast<double>(xh[i * channels_ + c]);
        const double d = g - inv_n * sum_dy[static_cast<std::size_t>(c)] -
                         h * inv_n * sum_dy_xhat[static_cast<std::size_t>(c)];
        gx[i * channels_ + c] = static_cast<S>(static_cast<double>(gamma_.value[c]) *
                                               inv_std_[static_cast<std::size_t>(c)] * d);
      }
    return gx;
  }

  std::vector<Param<S>*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor<S>*> buffers() override { return {&running_mean_, &running_var_}; }
  LayerKind kind() const override { return LayerKind::BatchNorm; }
  std::vector<std::uint32_t> hyper() const override { return {static_cast<std::uint32_t>(channels_)}; }

 private:
  std::int64_t channels_;
  double eps_, momentum_;
  Param<S> gamma_, beta_;
  Tensor<S> running_mean_, running_var_;
  // forward context
  bool train_ = false;
  std::int64_t population_ = 0;
  std::vector<double> mean_, inv_std_;
  Tensor<S> xhat_;
};

// ---------------------------------------------------------------------------
// Exponential linear unit, alpha = 1.

template <typename S>
class Elu final : public Layer<S> {
 public:
  TensorPtr<S> forward(TensorPtr<S> x, bool /*train*/, Rng& /*rng*/) override {
    Tensor<S> y(x->shape());
    for (std::int64_t i = 0; i < x->numel(); ++i) {
      const S v = (*x)[i];
      y[i] = v > S{0} ? v : static_cast<S>(std::expm1(static_cast<double>(v)));
    }
    output_ = make_tensor_ptr(std::move(y));
    return output_;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    Tensor<S> gx(gy.shape());
    const auto& y = *output_;
    for (std::int64_t i = 0; i < gy.numel(); ++i)
      gx[i] = gy[i] * (y[i] > S{0} ? S{1} : y[i] + S{1});
    return gx;
  }

  LayerKind kind() const override { return LayerKind::Elu; }

 private:
  TensorPtr<S> output_;
};

// ---------------------------------------------------------------------------
// Flattens everything after the time axis: [B x T x ...] -> [B x T x K].

template <typename S>
class TimeDistFlatten final : public Layer<S> {
 public:
  TensorPtr<S> forward(TensorPtr<S> x, bool /*train*/, Rng& /*rng*/) override {
    if (x->ndim() < 3) throw ShapeMismatch("flatten expects at least [B x T x ...]");
    in_shape_ = x->shape();
    std::int64_t k = 1;
    for (int i = 2; i < x->ndim(); ++i) k *= x->dim(i);
    Tensor<S> y = Tensor<S>(*x).reshaped({x->dim(0), x->dim(1), k});
    return make_tensor_ptr(std::move(y));
  }

  Tensor<S> backward(const Tensor<S>& gy) override { return Tensor<S>(gy).reshaped(in_shape_); }

  LayerKind kind() const override { return LayerKind::TimeDistFlatten; }

 private:
  typename Tensor<S>::Shape in_shape_;
};

// ---------------------------------------------------------------------------
// Fully connected layer applied over the trailing feature dimension.

template <typename S>
class Dense final : public Layer<S> {
 public:
  Dense(std::int64_t in_features, std::int64_t out_features, Rng& rng)
      : fin_(in_features), fout_(out_features) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(fin_));
    Tensor<S> w({fin_, fout_});
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<S>(rng.uniform(-limit, limit));
    weight_ = Param<S>("dense.weight", std::move(w));
    bias_ = Param<S>("dense.bias", Tensor<S>({fout_}));
  }

  TensorPtr<S> forward(TensorPtr<S> x, bool /*train*/, Rng& /*rng*/) override {
    if (x->ndim() < 1 || x->dim(x->ndim() - 1) != fin_)
      throw ShapeMismatch("dense expects trailing dim " + std::to_string(fin_) + ", got " +
                          Tensor<S>::shape_str(x->shape()));
    input_ = x;
    const std::int64_t rows = x->numel() / fin_;
    auto out_shape = x->shape();
    out_shape.back() = fout_;
    Tensor<S> y(out_shape);
    ConstMatMap<S> xm(x->data(), rows, fin_);
    ConstMatMap<S> w(weight_.value.data(), fin_, fout_);
    MatMap<S> ym(y.data(), rows, fout_);
    ym.noalias() = xm * w;
    ConstMatMap<S> b(bias_.value.data(), 1, fout_);
    ym.rowwise() += b.row(0);
    return make_tensor_ptr(std::move(y));
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const std::int64_t rows = gy.numel() / fout_;
    Tensor<S> gx(input_->shape());
    ConstMatMap<S> gym(gy.data(), rows, fout_);
    ConstMatMap<S> xm(input_->data(), rows, fin_);
    ConstMatMap<S> w(weight_.value.data(), fin_, fout_);
    MatMap<S> dw(weight_.grad.data(), fin_, fout_);
    MatMap<S> db(bias_.grad.data(), 1, fout_);
    MatMap<S> gxm(gx.data(), rows, fin_);
    dw.noalias() += xm.transpose() * gym;
    db.row(0) += gym.colwise().sum();
    gxm.noalias() = gym * w.transpose();
    return gx;
  }

  std::vector<Param<S>*> params() override { return {&weight_, &bias_}; }
  LayerKind kind() const override { return LayerKind::Dense; }
  std::vector<std::uint32_t> hyper() const override {
    return {static_cast<std::uint32_t>(fin_), static_cast<std::uint32_t>(fout_)};
  }

 private:
  std::int64_t fin_, fout_;
  Param<S> weight_, bias_;
  TensorPtr<S> input_;
};

// ---------------------------------------------------------------------------
// Inverted dropout: survivors are scaled by 1/(1-rate), inference is identity.

template <typename S>
class Dropout final : public Layer<S> {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidRate("dropout rate must lie in [0, 1)");
  }

  TensorPtr<S> forward(TensorPtr<S> x, bool train, Rng& rng) override {
    train_ = train;
    if (!train || rate_ == 0.0) return x;
    const S scale = static_cast<S>(1.0 / (1.0 - rate_));
    mask_ = Tensor<S>(x->shape());
    Tensor<S> y(x->shape());
    for (std::int64_t i = 0; i < x->numel(); ++i) {
      const S m = rng.bernoulli(rate_) ? S{0} : scale;
      mask_[i] = m;
      y[i] = (*x)[i] * m;
    }
    return make_tensor_ptr(std::move(y));
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    if (!train_ || rate_ == 0.0) return gy;
    Tensor<S> gx(gy.shape());
    for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * mask_[i];
    return gx;
  }

  double rate() const { return rate_; }
  LayerKind kind() const override { return LayerKind::Dropout; }
  std::vector<std::uint32_t> hyper() const override {
    const auto r = static_cast<float>(rate_);
    std::uint32_t bits;
    std::memcpy(&bits, &r, 4);
    return {bits};
  }

 private:
  double rate_;
  bool train_ = false;
  Tensor<S> mask_;
};

// ---------------------------------------------------------------------------
// Bidirectional LSTM returning the concatenated final hidden states.

template <typename S>
class BiLstm final : public Layer<S> {
 public:
  BiLstm(std::int64_t in_features, std::int64_t hidden, Rng& rng) : fin_(in_features), hidden_(hidden) {
    for (int d = 0; d < 2; ++d) {
      const std::string prefix = d == 0 ? "lstm.fwd." : "lstm.bwd.";
      dir_[d].wx = Param<S>(prefix + "wx", uniform_init({fin_, 4 * hidden_}, fin_, rng));
      dir_[d].wh = Param<S>(prefix + "wh", uniform_init({hidden_, 4 * hidden_}, hidden_, rng));
      Tensor<S> b({4 * hidden_});
      for (std::int64_t c = hidden_; c < 2 * hidden_; ++c) b[c] = S{1};  // forget-gate bias
      dir_[d].b = Param<S>(prefix + "b", std::move(b));
    }
  }

  TensorPtr<S> forward(TensorPtr<S> x, bool /*train*/, Rng& /*rng*/) override {
    if (x->ndim() != 3 || x->dim(2) != fin_)
      throw ShapeMismatch("bilstm expects [B x T x " + std::to_string(fin_) + "]");
    input_ = x;
    const std::int64_t batch = x->dim(0), steps = x->dim(1);
    if (steps < 1) throw ShapeMismatch("bilstm needs at least one time step");
    Tensor<S> y({batch, 2 * hidden_});
    for (int d = 0; d < 2; ++d) {
      auto& ctx = dir_[d];
      ctx.gates = Tensor<S>({steps, batch, 4 * hidden_});
      ctx.cell = Tensor<S>({steps, batch, hidden_});
      ctx.cell_tanh = Tensor<S>({steps, batch, hidden_});
      ctx.hidden_states = Tensor<S>({steps, batch, hidden_});
      Tensor<S> h({batch, hidden_});
      Tensor<S> c({batch, hidden_});
      ConstMatMap<S> wx(ctx.wx.value.data(), fin_, 4 * hidden_);
      ConstMatMap<S> wh(ctx.wh.value.data(), hidden_, 4 * hidden_);
      for (std::int64_t s = 0; s < steps; ++s) {
        const std::int64_t t = d == 0 ? s : steps - 1 - s;
        // z = x_t * Wx + h * Wh + b
        MatMap<S> z(ctx.gates.data() + s * batch * 4 * hidden_, batch, 4 * hidden_);
        Eigen::Map<const MatRM<S>, 0, Eigen::OuterStride<>> xts(
            x->data() + t * fin_, batch, fin_, Eigen::OuterStride<>(steps * fin_));
        ConstMatMap<S> hm(h.data(), batch, hidden_);
        z.noalias() = xts * wx;
        z.noalias() += hm * wh;
        ConstMatMap<S> bm(ctx.b.value.data(), 1, 4 * hidden_);
        z.rowwise() += bm.row(0);
        // gate nonlinearities and state update
        S* zp = ctx.gates.data() + s * batch * 4 * hidden_;
        S* cp = ctx.cell.data() + s * batch * hidden_;
        S* tp = ctx.cell_tanh.data() + s * batch * hidden_;
        S* hp = ctx.hidden_states.data() + s * batch * hidden_;
        for (std::int64_t bi = 0; bi < batch; ++bi) {
          S* zr = zp + bi * 4 * hidden_;
          for (std::int64_t u = 0; u < hidden_; ++u) {
            const S ig = sigmoid(zr[u]);
            const S fg = sigmoid(zr[hidden_ + u]);
            const S gg = static_cast<S>(std::tanh(static_cast<double>(zr[2 * hidden_ + u])));
            const S og = sigmoid(zr[3 * hidden_ + u]);
            zr[u] = ig;
            zr[hidden_ + u] = fg;
            zr[2 * hidden_ + u] = gg;
            zr[3 * hidden_ + u] = og;
            const S cv = fg * c[bi * hidden_ + u] + ig * gg;
            const S tv = static_cast<S>(std::tanh(static_cast<double>(cv)));
            cp[bi * hidden_ + u] = cv;
            tp[bi * hidden_ + u] = tv;
            const S hv = og * tv;
            hp[bi * hidden_ + u] = hv;
            h[bi * hidden_ + u] = hv;
            c[bi * hidden_ + u] = cv;
          }
        }
      }
      // final hidden state into the output block for this direction
      for (std::int64_t bi = 0; bi < batch; ++bi)
        std::copy_n(h.data() + bi * hidden_, hidden_, y.data() + bi * 2 * hidden_ + d * hidden_);
    }
    return make_tensor_ptr(std::move(y));
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const std::int64_t batch = input_->dim(0), steps = input_->dim(1);
    if (gy.shape() != std::vector<std::int64_t>{batch, 2 * hidden_})
      throw ShapeMismatch("bilstm backward shape");
    Tensor<S> gx(input_->shape());
    Tensor<S> dz({batch, 4 * hidden_});
    for (int d = 0; d < 2; ++d) {
      auto& ctx = dir_[d];
      Tensor<S> dh({batch, hidden_});
      Tensor<S> dc({batch, hidden_});
      for (std::int64_t bi = 0; bi < batch; ++bi)
        std::copy_n(gy.data() + bi * 2 * hidden_ + d * hidden_, hidden_, dh.data() + bi * hidden_);
      ConstMatMap<S> wx(ctx.wx.value.data(), fin_, 4 * hidden_);
      ConstMatMap<S> wh(ctx.wh.value.data(), hidden_, 4 * hidden_);
      MatMap<S> dwx(ctx.wx.grad.data(), fin_, 4 * hidden_);
      MatMap<S> dwh(ctx.wh.grad.data(), hidden_, 4 * hidden_);
      MatMap<S> db(ctx.b.grad.data(), 1, 4 * hidden_);
      for (std::int64_t s = steps - 1; s >= 0; --s) {
        const std::int64_t t = d == 0 ? s : steps - 1 - s;
        const S* zp = ctx.gates.data() + s * batch * 4 * hidden_;
        const S* tp = ctx.cell_tanh.data() + s * batch * hidden_;
        const S* cprev = s > 0 ? ctx.cell.data() + (s - 1) * batch * hidden_ : nullptr;
        for (std::int64_t bi = 0; bi < batch; ++bi) {
          const S* zr = zp + bi * 4 * hidden_;
          S* dzr = dz.data() + bi * 4 * hidden_;
          for (std::int64_t u = 0; u < hidden_; ++u) {
            const S ig = zr[u], fg = zr[hidden_ + u], gg = zr[2 * hidden_ + u], og = zr[3 * hidden_ + u];
            const S tv = tp[bi * hidden_ + u];
            const S cprev_v = cprev ? cprev[bi * hidden_ + u] : S{0};
            const S dh_v = dh[bi * hidden_ + u];
            S dc_v = dc[bi * hidden_ + u] + dh_v * og * (S{1} - tv * tv);
            const S di = dc_v * gg;
            const S df = dc_v * cprev_v;
            const S dg = dc_v * ig;
            const S do_ = dh_v * tv;
            dzr[u] = di * ig * (S{1} - ig);
            dzr[hidden_ + u] = df * fg * (S{1} - fg);
            dzr[2 * hidden_ + u] = dg * (S{1} - gg * gg);
            dzr[3 * hidden_ + u] = do_ * og * (S{1} - og);
            dc[bi * hidden_ + u] = dc_v * fg;  // carried to the previous step
          }
        }
        ConstMatMap<S> dzm(dz.data(), batch, 4 * hidden_);
        Eigen::Map<const MatRM<S>, 0, Eigen::OuterStride<>> xts(
            input_->data() + t * fin_, batch, fin_, Eigen::OuterStride<>(steps * fin_));
        dwx.noalias() += xts.transpose() * dzm;
        if (s > 0) {
          ConstMatMap<S> hprev(ctx.hidden_states.data() + (s - 1) * batch * hidden_, batch, hidden_);
          dwh.noalias() += hprev.transpose() * dzm;
        }
        db.row(0) += dzm.colwise().sum();
        Eigen::Map<MatRM<S>, 0, Eigen::OuterStride<>> gxt(
            gx.data() + t * fin_, batch, fin_, Eigen::OuterStride<>(steps * fin_));
        gxt.noalias() += dzm * wx.transpose();
        MatMap<S> dhm(dh.data(), batch, hidden_);
        dhm.noalias() = dzm * wh.transpose();
      }
    }
    return gx;
  }

  std::vector<Param<S>*> params() override {
    return {&dir_[0].wx, &dir_[0].wh, &dir_[0].b, &dir_[1].wx, &dir_[1].wh, &dir_[1].b};
  }
  LayerKind kind() const override { return LayerKind::BiLstm; }
  std::vector<std::uint32_t> hyper() const override {
    return {static_cast<std::uint32_t>(fin_), static_cast<std::uint32_t>(hidden_)};
  }

 private:
  static S sigmoid(S v) { return static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))); }

  static Tensor<S> uniform_init(typename Tensor<S>::Shape shape, std::int64_t fan_in, Rng& rng) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor<S> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.uniform(-limit, limit));
    return t;
  }

  struct Direction {
    Param<S> wx, wh, b;
    // forward context, indexed by processing step
    Tensor<S> gates;        // [steps x B x 4H], post-activation (i, f, g, o)
    Tensor<S> cell;         // [steps x B x H]
    Tensor<S> cell_tanh;    // [steps x B x H]
    Tensor<S> hidden_states;  // [steps x B x H]
  };

  std::int64_t fin_, hidden_;
  Direction dir_[2];
  TensorPtr<S> input_;
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy head.

template <typename S>
Tensor<S> softmax(const Tensor<S>& logits) {
  if (logits.ndim() != 2) throw ShapeMismatch("softmax expects [B x K]");
  const std::int64_t batch = logits.dim(0), k = logits.dim(1);
  Tensor<S> p(logits.shape());
  for (std::int64_t b = 0; b < batch; ++b) {
    const S* row = logits.data() + b * k;
    S mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    for (std::int64_t j = 0; j < k; ++j)
      p[b * k + j] = static_cast<S>(std::exp(static_cast<double>(row[j] - mx)) / denom);
  }
  return p;
}

/// Mean negative log-likelihood and its gradient, (softmax - onehot)/B.
template <typename S>
std::pair<double, Tensor<S>> softmax_xent(const Tensor<S>& logits, std::span<const int> labels) {
  if (logits.ndim() != 2) throw ShapeMismatch("softmax_xent expects [B x K]");
  const std::int64_t batch = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != batch)
    throw ShapeMismatch("label count does not match batch");
  for (int label : labels)
    if (label < 0 || label >= k) throw LabelOutOfRange("label " + std::to_string(label));
  Tensor<S> grad = softmax(logits);
  double loss = 0.0;
  for (std::int64_t b = 0; b < batch; ++b) {
    const double p = static_cast<double>(grad[b * k + labels[static_cast<std::size_t>(b)]]);
    loss -= std::log(std::max(p, 1e-300));
    grad[b * k + labels[static_cast<std::size_t>(b)]] -= S{1};
  }
  const auto inv_b = static_cast<S>(1.0 / static_cast<double>(batch));
  for (std::int64_t i = 0; i < grad.numel(); ++i) grad[i] *= inv_b;
  return {loss / static_cast<double>(batch), std::move(grad)};
}

}  // namespace eegmesh
