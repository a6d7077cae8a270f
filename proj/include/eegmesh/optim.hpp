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

#include <cmath>
#include <cstdint>
#include <vector>

#include "eegmesh/layers.hpp"
#include "eegmesh/tensor.hpp"

namespace eegmesh {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. The moment buffers are exposed so checkpoints
/// can resume optimization bit-exactly.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Param<S>*> params, AdamConfig config) : params_(std::move(params)), cfg_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k]->value;
      auto& grad = params_[k]->grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::int64_t i = 0; i < value.numel(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * g;
        const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * g * g;
        m[i] = static_cast<S>(mi);
        v[i] = static_cast<S>(vi);
        value[i] = static_cast<S>(static_cast<double>(value[i]) -
                                  cfg_.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.epsilon));
      }
    }
  }

  std::uint64_t t() const { return t_; }
  void restore(std::uint64_t t, std::vector<Tensor<S>> m, std::vector<Tensor<S>> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }
  const std::vector<Tensor<S>>& moments_m() const { return m_; }
  const std::vector<Tensor<S>>& moments_v() const { return v_; }

 private:
  std::vector<Param<S>*> params_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

}  // namespace eegmesh
