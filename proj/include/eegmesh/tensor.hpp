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

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include "eegmesh/errors.hpp"

namespace eegmesh {

/// Dense row-major tensor. The scalar type is a template parameter so the
/// same layer code runs in 32-bit mode for training and 64-bit mode for
/// gradient verification.
template <typename S>
class Tensor {
 public:
  using Shape = std::vector<std::int64_t>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(count(shape_)) {}
  Tensor(Shape shape, S value) : shape_(std::move(shape)), data_(count(shape_), value) {}
  Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != count(shape_))
      throw ShapeMismatch("tensor data size does not match shape");
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, S value) { return Tensor(std::move(shape), value); }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& vec() { return data_; }
  const std::vector<S>& vec() const { return data_; }

  S& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const S& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Strided element access, mostly for tests and small shapes.
  template <typename... I>
  S& at(I... idx) {
    return data_[flat_index({static_cast<std::int64_t>(idx)...})];
  }
  template <typename... I>
  const S& at(I... idx) const {
    return data_[flat_index({static_cast<std::int64_t>(idx)...})];
  }

  void fill(S value) { std::fill(data_.begin(), data_.end(), value); }

  /// Shape change over the same data; element count must be preserved.
  Tensor reshaped(Shape new_shape) const& {
    Tensor out = *this;
    out.reshape_inplace(std::move(new_shape));
    return out;
  }
  Tensor reshaped(Shape new_shape) && {
    reshape_inplace(std::move(new_shape));
    return std::move(*this);
  }
  void reshape_inplace(Shape new_shape) {
    if (count(new_shape) != numel())
      throw ShapeMismatch("reshape changes element count: " + shape_str(shape_) + " -> " +
                          shape_str(new_shape));
    shape_ = std::move(new_shape);
  }

  /// Converts between scalar types (float <-> double).
  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

  static std::int64_t count(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  static std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? " x " : "") << shape[i];
    os << "]";
    return os.str();
  }

 private:
  std::size_t flat_index(std::initializer_list<std::int64_t> idx) const {
    std::int64_t flat = 0;
    std::size_t i = 0;
    for (auto v : idx) {
      flat = flat * shape_[i] + v;
      ++i;
    }
    return static_cast<std::size_t>(flat);
  }

  Shape shape_;
  std::vector<S> data_;
};

template <typename S>
using TensorPtr = std::shared_ptr<const Tensor<S>>;

template <typename S>
TensorPtr<S> make_tensor_ptr(Tensor<S> t) {
  return std::make_shared<const Tensor<S>>(std::move(t));
}

}  // namespace eegmesh
