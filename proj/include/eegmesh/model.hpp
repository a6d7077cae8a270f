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

// The mesh classifier as a fixed sequential graph: four conv/BN/ELU blocks,
// time-distributed flatten, dense 28160 -> 1024 with dropout/BN/ELU, a
// bidirectional LSTM collapsing time into a 256-dim vector (the embedding
// tap used for verification) and the class projection.
//
// Checkpoints are little-endian binary: magic, version, model kind, T, K,
// dropout rate, init seed, epoch/step counters, a per-layer manifest
// (kind + hyperparameters + tensor shapes) and all parameter and buffer
// tensors as float32. An optional trailing section carries Adam moments so
// training resumes bit-exactly.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eegmesh/binio.hpp"
#include "eegmesh/errors.hpp"
#include "eegmesh/layers.hpp"
#include "eegmesh/layout.hpp"
#include "eegmesh/rng.hpp"

namespace eegmesh {

enum class ModelKind : std::uint8_t {
  ActionRecognition = 0,
  UserIdentification = 1,
};

inline constexpr std::int64_t kLstmHidden = 128;
inline constexpr std::int64_t kEmbeddingDim = 2 * kLstmHidden;  // 256
inline constexpr std::int64_t kDenseWidth = 1024;
inline constexpr std::int64_t kFlattenWidth = static_cast<std::int64_t>(kGridCells) * 256;  // 28160

template <typename S>
class ModelGraph {
 public:
  ModelGraph(ModelKind kind, std::int64_t time_steps, std::int64_t classes, double dropout_rate,
             std::uint64_t init_seed)
      : kind_(kind),
        time_steps_(time_steps),
        classes_(classes),
        dropout_rate_(dropout_rate),
        init_seed_(init_seed),
        dropout_rng_(Rng(init_seed).fork(0x6d61736bULL)) {}

  void add(std::unique_ptr<Layer<S>> layer) { layers_.push_back(std::move(layer)); }
  void set_tap(int layer_index) { tap_index_ = layer_index; }

  /// Runs the graph; in train mode dropout masks draw from the model RNG.
  TensorPtr<S> forward(TensorPtr<S> x, bool train) {
    TensorPtr<S> v = std::move(x);
    tap_.reset();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      v = layers_[i]->forward(std::move(v), train, dropout_rng_);
      if (static_cast<int>(i) == tap_index_) tap_ = v;
    }
    return v;
  }

  /// Backpropagates from the logits gradient, accumulating into param grads.
  Tensor<S> backward(Tensor<S> grad_logits) {
    Tensor<S> g = std::move(grad_logits);
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  /// Activation right after the bidirectional LSTM on the last forward pass.
  const TensorPtr<S>& embedding_tap() const {
    if (!tap_) throw ComputeError("no embedding tap recorded; run forward first");
    return tap_;
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }
  std::vector<Tensor<S>*> buffers() {
    std::vector<Tensor<S>*> out;
    for (auto& l : layers_)
      for (auto* b : l->buffers()) out.push_back(b);
    return out;
  }
  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }
  std::int64_t param_count() {
    std::int64_t n = 0;
    for (auto* p : params()) n += p->value.numel();
    return n;
  }

  const std::vector<std::unique_ptr<Layer<S>>>& layers() const { return layers_; }
  ModelKind kind() const { return kind_; }
  std::int64_t time_steps() const { return time_steps_; }
  std::int64_t classes() const { return classes_; }
  double dropout_rate() const { return dropout_rate_; }
  std::uint64_t init_seed() const { return init_seed_; }
  Rng& dropout_rng() { return dropout_rng_; }
  void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  std::uint32_t epoch = 0;
  std::uint64_t step = 0;

 private:
  ModelKind kind_;
  std::int64_t time_steps_, classes_;
  double dropout_rate_;
  std::uint64_t init_seed_;
  Rng dropout_rng_;
  std::vector<std::unique_ptr<Layer<S>>> layers_;
  int tap_index_ = -1;
  TensorPtr<S> tap_;
};

/// Builds the reference architecture for `time_steps` mesh frames and K
/// output classes. The layer stack and widths are fixed; only T and K vary.
template <typename S>
ModelGraph<S> build_table1_model(std::int64_t time_steps, std::int64_t classes, ModelKind kind,
                                 double dropout_rate = 0.5, std::uint64_t seed = 0) {
  if (time_steps < 1) throw ShapeMismatch("model needs at least one time step");
  if (classes < 2) throw ShapeMismatch("model needs at least two classes");
  ModelGraph<S> model(kind, time_steps, classes, dropout_rate, seed);
  Rng rng(seed);
  std::int64_t cin = 1;
  for (std::int64_t cout : {32, 64, 128, 256}) {
    model.add(std::make_unique<TimeDistConv3x3<S>>(cin, cout, rng));
    model.add(std::make_unique<BatchNorm<S>>(cout));
    model.add(std::make_unique<Elu<S>>());
    cin = cout;
  }
  model.add(std::make_unique<TimeDistFlatten<S>>());
  model.add(std::make_unique<Dense<S>>(kFlattenWidth, kDenseWidth, rng));
  model.add(std::make_unique<Dropout<S>>(dropout_rate));
  model.add(std::make_unique<BatchNorm<S>>(kDenseWidth));
  model.add(std::make_unique<Elu<S>>());
  model.add(std::make_unique<BiLstm<S>>(kDenseWidth, kLstmHidden, rng));
  model.set_tap(static_cast<int>(model.layers().size()) - 1);
  model.add(std::make_unique<Dense<S>>(kEmbeddingDim, classes, rng));
  return model;
}

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(ModelGraph<S>& model, const std::filesystem::path& path,
                     const std::vector<Tensor<S>>* adam_m = nullptr,
                     const std::vector<Tensor<S>>* adam_v = nullptr,
                     std::uint64_t adam_t = 0) {
  BinaryWriter w;
  w.tag("EMCK");
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(model.kind()));
  w.u32(static_cast<std::uint32_t>(model.time_steps()));
  w.u32(static_cast<std::uint32_t>(model.classes()));
  w.f32(static_cast<float>(model.dropout_rate()));
  w.u64(model.init_seed());
  w.u32(model.epoch);
  w.u64(model.step);
  const auto& layers = model.layers();
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    w.u8(static_cast<std::uint8_t>(layer->kind()));
    auto hyper = layer->hyper();
    w.u8(static_cast<std::uint8_t>(hyper.size()));
    for (auto h : hyper) w.u32(h);
  }
  auto write_tensor = [&w](const Tensor<S>& t) {
    w.u8(static_cast<std::uint8_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) w.u32(static_cast<std::uint32_t>(t.dim(i)));
    for (std::int64_t i = 0; i < t.numel(); ++i) w.f32(static_cast<float>(t[i]));
  };
  auto params = model.params();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (auto* p : params) write_tensor(p->value);
  auto buffers = model.buffers();
  w.u32(static_cast<std::uint32_t>(buffers.size()));
  for (auto* b : buffers) write_tensor(*b);
  const bool with_adam = adam_m && adam_v;
  w.u8(with_adam ? 1 : 0);
  if (with_adam) {
    w.u64(adam_t);
    for (const auto& t : *adam_m) write_tensor(t);
    for (const auto& t : *adam_v) write_tensor(t);
  }
  w.save(path);
}

template <typename S>
struct LoadedCheckpoint {
  ModelGraph<S> model;
  bool has_adam = false;
  std::uint64_t adam_t = 0;
  std::vector<Tensor<S>> adam_m, adam_v;
};

/// Peeks only the model kind byte, e.g. to reject an action-recognition
/// checkpoint where an identification model is required.
inline ModelKind checkpoint_kind(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::from_file(path);
  r.expect_tag("EMCK", "checkpoint");
  if (r.u32() != kCheckpointVersion) throw BadCheckpoint("unsupported checkpoint version");
  return static_cast<ModelKind>(r.u8());
}

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::from_file(path);
  r.expect_tag("EMCK", "checkpoint");
  if (r.u32() != kCheckpointVersion) throw BadCheckpoint("unsupported checkpoint version");
  const auto kind = static_cast<ModelKind>(r.u8());
  const std::int64_t t_steps = r.u32();
  const std::int64_t classes = r.u32();
  const double rate = r.f32();
  const std::uint64_t seed = r.u64();
  const std::uint32_t epoch = r.u32();
  const std::uint64_t step = r.u64();

  LoadedCheckpoint<S> out{build_table1_model<S>(t_steps, classes, kind, rate, seed)};
  out.model.epoch = epoch;
  out.model.step = step;

  const auto& layers = out.model.layers();
  const std::uint32_t layer_count = r.u32();
  if (layer_count != layers.size()) throw BadCheckpoint("layer count mismatch");
  for (const auto& layer : layers) {
    if (r.u8() != static_cast<std::uint8_t>(layer->kind())) throw BadCheckpoint("layer kind mismatch");
    const auto hyper = layer->hyper();
    if (r.u8() != hyper.size()) throw BadCheckpoint("layer hyperparameter count mismatch");
    for (auto h : hyper)
      if (r.u32() != h) throw BadCheckpoint("layer hyperparameter mismatch");
  }
  auto read_tensor_into = [&r](Tensor<S>& t, const char* what) {
    const int ndim = r.u8();
    if (ndim != t.ndim()) throw BadCheckpoint(std::string("tensor rank mismatch in ") + what);
    for (int i = 0; i < ndim; ++i)
      if (static_cast<std::int64_t>(r.u32()) != t.dim(i))
        throw BadCheckpoint(std::string("tensor shape mismatch in ") + what);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(r.f32());
  };
  auto params = out.model.params();
  if (r.u32() != params.size()) throw BadCheckpoint("parameter count mismatch");
  for (auto* p : params) read_tensor_into(p->value, p->name.c_str());
  auto buffers = out.model.buffers();
  if (r.u32() != buffers.size()) throw BadCheckpoint("buffer count mismatch");
  for (auto* b : buffers) read_tensor_into(*b, "buffer");
  if (r.u8() == 1) {
    out.has_adam = true;
    out.adam_t = r.u64();
    out.adam_m.reserve(params.size());
    out.adam_v.reserve(params.size());
    for (auto* p : params) {
      Tensor<S> m(p->value.shape());
      read_tensor_into(m, "adam.m");
      out.adam_m.push_back(std::move(m));
    }
    for (auto* p : params) {
      Tensor<S> v(p->value.shape());
      read_tensor_into(v, "adam.v");
      out.adam_v.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace eegmesh
