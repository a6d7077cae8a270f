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

// Split protocols and the optimization loop. Three experiment shapes:
// inter-subject action recognition (10-fold CV), intra-subject action
// recognition (one model per user, 90/10) and user identification
// (train/val/test fractions with every subject present in train).
// Standardization statistics are always fitted on the training portion and
// applied on the fly during batch assembly, so cached meshes stay raw.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "eegmesh/binio.hpp"
#include "eegmesh/errors.hpp"
#include "eegmesh/model.hpp"
#include "eegmesh/optim.hpp"
#include "eegmesh/preprocess.hpp"
#include "eegmesh/rng.hpp"

namespace eegmesh {

struct TrainConfig {
  int epochs = 80;
  double learning_rate = 1e-4;
  int batch_size = 32;
  AdamConfig adam{};  // learning_rate is copied in before use
  std::uint64_t seed = 0;
  double window_seconds = 1.0;
  int phase_count = 4;
  double dropout_rate = 0.5;
  std::function<void(int epoch, double train_loss, double val_accuracy)> on_epoch;
};

// ---------------------------------------------------------------------------
// Splits

struct Fold {
  std::vector<std::int64_t> train, test;
};

/// Seeded k-fold partition with near-equal fold sizes; every example lands in
/// exactly one test fold.
inline std::vector<Fold> make_folds(std::int64_t n, int k, std::uint64_t seed) {
  if (k < 2) throw TooFewExamples("k-fold needs k >= 2");
  if (n < k) throw TooFewExamples("fewer examples than folds");
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    const auto lo = static_cast<std::size_t>(n) * static_cast<std::size_t>(f) / static_cast<std::size_t>(k);
    const auto hi =
        static_cast<std::size_t>(n) * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(k);
    auto& fold = folds[static_cast<std::size_t>(f)];
    fold.test.assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                     order.begin() + static_cast<std::ptrdiff_t>(hi));
    fold.train.reserve(static_cast<std::size_t>(n) - (hi - lo));
    fold.train.insert(fold.train.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(lo));
    fold.train.insert(fold.train.end(), order.begin() + static_cast<std::ptrdiff_t>(hi), order.end());
  }
  return folds;
}

struct IdentificationSplit {
  std::vector<std::int64_t> train, val, test;
};

/// Shuffled fractional split with the guarantee that every subject with data
/// contributes at least one training window (a 109-class classifier cannot
/// learn a class it never sees).
inline IdentificationSplit split_identification(std::span<const int> subject_of,
                                                std::array<double, 3> fractions,
                                                std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(subject_of.size());
  if (n == 0) throw TooFewExamples("empty example set");
  double total = fractions[0] + fractions[1] + fractions[2];
  if (total <= 0) throw InvalidManifest("split fractions must sum to a positive value");
  for (auto& f : fractions) f /= total;

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  const auto n_train = static_cast<std::int64_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_train_val =
      static_cast<std::int64_t>(std::llround((fractions[0] + fractions[1]) * static_cast<double>(n)));
  IdentificationSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train_val), order.end());

  // Repair pass: pull one window of any train-absent subject into train,
  // swapping against a window of an over-represented subject.
  std::unordered_map<int, std::int64_t> train_count;
  for (auto i : split.train) ++train_count[subject_of[static_cast<std::size_t>(i)]];
  std::unordered_set<int> all_subjects(subject_of.begin(), subject_of.end());
  for (int subject : std::set<int>(all_subjects.begin(), all_subjects.end())) {
    if (train_count[subject] > 0) continue;
    bool fixed = false;
    for (auto* side : {&split.val, &split.test}) {
      for (auto& idx : *side) {
        if (subject_of[static_cast<std::size_t>(idx)] != subject) continue;
        // find a swap partner whose subject keeps >= 1 training window
        for (auto& tr : split.train) {
          const int partner = subject_of[static_cast<std::size_t>(tr)];
          if (train_count[partner] < 2) continue;
          std::swap(idx, tr);
          --train_count[partner];
          ++train_count[subject];
          fixed = true;
          break;
        }
        if (fixed) break;
      }
      if (fixed) break;
    }
    if (!fixed)
      throw SubjectMissingFromTrain("subject " + std::to_string(subject) +
                                    " has no window in the training partition");
  }
  return split;
}

/// Rest windows can outnumber the 4-second action trials; downsample them to
/// the median per-class count before splitting. Returns kept indices.
inline std::vector<std::int64_t> balance_rest_windows(const std::vector<MeshSequence>& pool,
                                                      std::uint64_t seed) {
  std::array<std::vector<std::int64_t>, kActionClassCount> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i)
    by_class[static_cast<std::size_t>(pool[i].action)].push_back(static_cast<std::int64_t>(i));
  std::array<std::int64_t, kActionClassCount> counts{};
  for (int c = 0; c < kActionClassCount; ++c) counts[static_cast<std::size_t>(c)] = static_cast<std::int64_t>(by_class[static_cast<std::size_t>(c)].size());
  auto sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  const std::int64_t median = sorted[kActionClassCount / 2];

  auto& rest = by_class[static_cast<std::size_t>(ActionClass::RestClosedEyes)];
  if (static_cast<std::int64_t>(rest.size()) > median && median > 0) {
    Rng rng(Rng(seed).fork(0x62616c61ULL).seed());
    rng.shuffle(rest);
    rest.resize(static_cast<std::size_t>(median));
    std::sort(rest.begin(), rest.end());
  }
  std::vector<std::int64_t> kept;
  for (const auto& cls : by_class) kept.insert(kept.end(), cls.begin(), cls.end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

// ---------------------------------------------------------------------------
// Standardization at batch-assembly time

/// Per-cell affine transform derived from per-electrode z-score statistics.
/// Unoccupied cells pass through unchanged (they are zero anyway).
struct CellStandardizer {
  std::array<double, kGridCells> mean{};
  std::array<double, kGridCells> inv_std{};
  std::string provenance = "identity";

  CellStandardizer() {
    inv_std.fill(1.0);
  }

  static CellStandardizer identity() { return {}; }

  static CellStandardizer from(const ZscoreStats& stats, const std::vector<int>& channel_cells) {
    if (!stats.fitted) throw InsufficientData("z-score stats not fitted");
    CellStandardizer s;
    s.provenance = stats.provenance;
    for (int ch = 0; ch < kElectrodeCount; ++ch) {
      const int cell = channel_cells[static_cast<std::size_t>(ch)];
      s.mean[static_cast<std::size_t>(cell)] = stats.mean[static_cast<std::size_t>(ch)];
      s.inv_std[static_cast<std::size_t>(cell)] = 1.0 / stats.stddev[static_cast<std::size_t>(ch)];
    }
    return s;
  }
};

inline void save_standardizer(const CellStandardizer& s, const std::filesystem::path& path) {
  BinaryWriter w;
  w.tag("EMZS");
  w.u32(static_cast<std::uint32_t>(s.provenance.size()));
  w.raw({reinterpret_cast<const unsigned char*>(s.provenance.data()), s.provenance.size()});
  for (double v : s.mean) w.f64(v);
  for (double v : s.inv_std) w.f64(v);
  w.save(path);
}

inline CellStandardizer load_standardizer(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::from_file(path);
  r.expect_tag("EMZS", "standardizer");
  CellStandardizer s;
  const std::uint32_t len = r.u32();
  s.provenance.clear();
  for (std::uint32_t i = 0; i < len; ++i) s.provenance.push_back(static_cast<char>(r.u8()));
  for (auto& v : s.mean) v = r.f64();
  for (auto& v : s.inv_std) v = r.f64();
  return s;
}

/// Indices plus aligned labels over a shared mesh pool.
struct DataView {
  const std::vector<MeshSequence>* pool = nullptr;
  std::vector<std::int64_t> indices;
  std::vector<int> labels;

  std::int64_t size() const { return static_cast<std::int64_t>(indices.size()); }
  const MeshSequence& mesh(std::int64_t i) const {
    return (*pool)[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])];
  }
};

/// Stacks meshes into a [B x T x 10 x 11 x 1] tensor, standardizing cells on
/// the way in.
template <typename S>
Tensor<S> assemble_batch(const DataView& view, std::span<const std::int64_t> rows,
                         const CellStandardizer& standardizer) {
  if (rows.empty()) throw EmptyTestSet("empty batch");
  const std::int64_t t_steps = view.mesh(rows[0]).time_steps;
  Tensor<S> batch({static_cast<std::int64_t>(rows.size()), t_steps, kGridRows, kGridCols, 1});
  S* out = batch.data();
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto& mesh = view.mesh(rows[b]);
    if (mesh.time_steps != t_steps) throw ShapeMismatch("mixed time steps in one batch");
    for (std::int64_t t = 0; t < t_steps; ++t)
      for (int cell = 0; cell < kGridCells; ++cell)
        *out++ = static_cast<S>(
            (static_cast<double>(mesh.values[static_cast<std::size_t>(t * kGridCells + cell)]) -
             standardizer.mean[static_cast<std::size_t>(cell)]) *
            standardizer.inv_std[static_cast<std::size_t>(cell)]);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Metrics

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::int64_t total = 0;
  int num_classes = 0;
  std::vector<std::int64_t> confusion;  // [K x K], rows = true class

  std::int64_t at(int truth, int predicted) const {
    return confusion[static_cast<std::size_t>(truth * num_classes + predicted)];
  }
};

/// Accuracy is trace over total; precision/recall are macro-averaged with
/// empty denominators contributing zero.
inline ClassificationMetrics metrics_from_confusion(std::vector<std::int64_t> confusion, int k) {
  ClassificationMetrics m;
  m.num_classes = k;
  m.confusion = std::move(confusion);
  std::int64_t trace = 0;
  for (int c = 0; c < k; ++c) trace += m.confusion[static_cast<std::size_t>(c * k + c)];
  for (auto v : m.confusion) m.total += v;
  if (m.total == 0) throw EmptyTestSet("empty confusion matrix");
  m.accuracy = static_cast<double>(trace) / static_cast<double>(m.total);
  for (int c = 0; c < k; ++c) {
    std::int64_t col = 0, row = 0;
    for (int j = 0; j < k; ++j) {
      col += m.confusion[static_cast<std::size_t>(j * k + c)];
      row += m.confusion[static_cast<std::size_t>(c * k + j)];
    }
    const auto tp = static_cast<double>(m.confusion[static_cast<std::size_t>(c * k + c)]);
    m.macro_precision += col > 0 ? tp / static_cast<double>(col) : 0.0;
    m.macro_recall += row > 0 ? tp / static_cast<double>(row) : 0.0;
  }
  m.macro_precision /= k;
  m.macro_recall /= k;
  return m;
}

template <typename S>
std::vector<int> predict(ModelGraph<S>& model, const DataView& view,
                         const CellStandardizer& standardizer, int batch_size) {
  std::vector<int> predictions;
  predictions.reserve(static_cast<std::size_t>(view.size()));
  for (std::int64_t at = 0; at < view.size(); at += batch_size) {
    const auto take = std::min<std::int64_t>(batch_size, view.size() - at);
    std::vector<std::int64_t> rows(static_cast<std::size_t>(take));
    std::iota(rows.begin(), rows.end(), at);
    auto x = assemble_batch<S>(view, rows, standardizer);
    auto logits = model.forward(make_tensor_ptr(std::move(x)), /*train=*/false);
    const std::int64_t k = logits->dim(1);
    for (std::int64_t b = 0; b < take; ++b) {
      const S* row = logits->data() + b * k;
      int best = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
      predictions.push_back(best);
    }
  }
  return predictions;
}

template <typename S>
ClassificationMetrics evaluate_classification(ModelGraph<S>& model, const DataView& test,
                                              const CellStandardizer& standardizer,
                                              int batch_size = 32) {
  if (test.size() == 0) throw EmptyTestSet("evaluation set is empty");
  const int k = static_cast<int>(model.classes());
  auto preds = predict(model, test, standardizer, batch_size);
  std::vector<std::int64_t> confusion(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0);
  for (std::int64_t i = 0; i < test.size(); ++i) {
    const int truth = test.labels[static_cast<std::size_t>(i)];
    const int pred = preds[static_cast<std::size_t>(i)];
    ++confusion[static_cast<std::size_t>(truth * k + pred)];
  }
  return metrics_from_confusion(std::move(confusion), k);
}

// ---------------------------------------------------------------------------
// Leakage guards

inline void assert_disjoint(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                            const char* what) {
  std::unordered_set<std::int64_t> set(a.begin(), a.end());
  for (auto i : b)
    if (set.count(i)) throw ComputeError(std::string("leakage guard: shared index in ") + what);
}

/// Content-level duplicate detection between two sides of a split. Windows
/// with byte-identical tensors in both sides are reported (count returned)
/// so protocols can flag suspicious users.
inline std::int64_t count_duplicate_windows(const DataView& a, const DataView& b) {
  std::unordered_set<std::uint64_t> hashes;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const auto& v = a.mesh(i).values;
    hashes.insert(fnv1a({reinterpret_cast<const unsigned char*>(v.data()), v.size() * sizeof(float)}));
  }
  std::int64_t dup = 0;
  for (std::int64_t i = 0; i < b.size(); ++i) {
    const auto& v = b.mesh(i).values;
    if (hashes.count(
            fnv1a({reinterpret_cast<const unsigned char*>(v.data()), v.size() * sizeof(float)})))
      ++dup;
  }
  return dup;
}

// ---------------------------------------------------------------------------
// Optimization loop

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> curve;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  std::int64_t steps = 0;
};

template <typename S>
std::vector<Tensor<S>> snapshot_state(ModelGraph<S>& model) {
  std::vector<Tensor<S>> out;
  for (auto* p : model.params()) out.push_back(p->value);
  for (auto* b : model.buffers()) out.push_back(*b);
  return out;
}

template <typename S>
void restore_state(ModelGraph<S>& model, const std::vector<Tensor<S>>& snapshot) {
  std::size_t i = 0;
  for (auto* p : model.params()) p->value = snapshot[i++];
  for (auto* b : model.buffers()) *b = snapshot[i++];
}

/// Runs exactly cfg.epochs shuffled-minibatch passes. When a validation view
/// is given, the best-validation parameters are restored at the end;
/// otherwise the last epoch stands. Non-finite loss aborts.
template <typename S>
TrainResult train_model(ModelGraph<S>& model, const DataView& train, const DataView* val,
                        const CellStandardizer& standardizer, const TrainConfig& cfg) {
  if (train.size() == 0) throw InsufficientData("empty training set");
  AdamConfig adam_cfg = cfg.adam;
  adam_cfg.learning_rate = cfg.learning_rate;
  Adam<S> adam(model.params(), adam_cfg);
  Rng shuffle_rng = Rng(cfg.seed).fork(0x73687566ULL);

  TrainResult result;
  std::vector<Tensor<S>> best_state;
  std::vector<std::int64_t> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::int64_t loss_batches = 0;
    for (std::int64_t at = 0; at < train.size(); at += cfg.batch_size) {
      const auto take = std::min<std::int64_t>(cfg.batch_size, train.size() - at);
      if (take < 2) continue;  // batch statistics need at least two rows
      std::span<const std::int64_t> rows(order.data() + at, static_cast<std::size_t>(take));
      auto x = assemble_batch<S>(train, rows, standardizer);
      std::vector<int> labels(static_cast<std::size_t>(take));
      for (std::int64_t b = 0; b < take; ++b)
        labels[static_cast<std::size_t>(b)] = train.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])];
      auto logits = model.forward(make_tensor_ptr(std::move(x)), /*train=*/true);
      auto [loss, grad] = softmax_xent(*logits, labels);
      if (!std::isfinite(loss))
        throw DivergenceDetected("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(result.steps));
      model.zero_grad();
      model.backward(std::move(grad));
      adam.step();
      ++result.steps;
      ++model.step;
      loss_sum += loss;
      ++loss_batches;
    }
    model.epoch = static_cast<std::uint32_t>(epoch + 1);

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = loss_batches > 0 ? loss_sum / static_cast<double>(loss_batches) : 0.0;
    if (val && val->size() > 0) {
      stats.val_accuracy = evaluate_classification(model, *val, standardizer, cfg.batch_size).accuracy;
      if (stats.val_accuracy > result.best_val_accuracy || result.best_epoch < 0) {
        result.best_val_accuracy = stats.val_accuracy;
        result.best_epoch = epoch + 1;
        best_state = snapshot_state(model);
      }
    }
    result.curve.push_back(stats);
    if (cfg.on_epoch) cfg.on_epoch(stats.epoch, stats.train_loss, stats.val_accuracy);
  }
  if (!best_state.empty()) restore_state(model, best_state);
  return result;
}

// ---------------------------------------------------------------------------
// Protocol drivers

inline std::vector<int> action_labels(const std::vector<MeshSequence>& pool,
                                      std::span<const std::int64_t> indices) {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (auto i : indices) labels.push_back(static_cast<int>(pool[static_cast<std::size_t>(i)].action));
  return labels;
}

/// Maps sorted distinct subject ids to contiguous class indices.
inline std::map<int, int> subject_class_map(const std::vector<MeshSequence>& pool) {
  std::map<int, int> map;
  for (const auto& m : pool) map.emplace(m.subject_id, 0);
  int next = 0;
  for (auto& [subject, cls] : map) cls = next++;
  return map;
}

inline std::vector<int> subject_labels(const std::vector<MeshSequence>& pool,
                                       std::span<const std::int64_t> indices,
                                       const std::map<int, int>& subject_to_class) {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (auto i : indices)
    labels.push_back(subject_to_class.at(pool[static_cast<std::size_t>(i)].subject_id));
  return labels;
}

/// Fits per-electrode statistics on the training indices of a raw mesh pool.
inline CellStandardizer fit_standardizer(const std::vector<MeshSequence>& pool,
                                         std::span<const std::int64_t> train_indices,
                                         const std::vector<int>& channel_cells,
                                         std::string provenance) {
  std::vector<const MeshSequence*> train_meshes;
  train_meshes.reserve(train_indices.size());
  for (auto i : train_indices) train_meshes.push_back(&pool[static_cast<std::size_t>(i)]);
  return CellStandardizer::from(
      zscore_fit_meshes({train_meshes.data(), train_meshes.size()}, channel_cells, std::move(provenance)),
      channel_cells);
}

struct FoldOutcome {
  int fold = 0;
  ClassificationMetrics metrics;
};

struct InterSubjectResult {
  std::vector<FoldOutcome> folds;
  double mean_accuracy = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
};

/// 10-fold cross validation over the pooled windows of all selected
/// subjects. Folds have no validation split; the last epoch is evaluated.
template <typename S = float>
InterSubjectResult run_inter_subject(const std::vector<MeshSequence>& pool,
                                     const std::vector<int>& channel_cells, const TrainConfig& cfg,
                                     int k_folds = 10, ZscoreMode zscore = ZscoreMode::CorpusFit) {
  auto kept = balance_rest_windows(pool, cfg.seed);
  auto folds = make_folds(static_cast<std::int64_t>(kept.size()), k_folds, cfg.seed);
  InterSubjectResult result;
  for (int f = 0; f < k_folds; ++f) {
    auto& fold = folds[static_cast<std::size_t>(f)];
    DataView train{&pool, {}, {}};
    DataView test{&pool, {}, {}};
    for (auto i : fold.train) train.indices.push_back(kept[static_cast<std::size_t>(i)]);
    for (auto i : fold.test) test.indices.push_back(kept[static_cast<std::size_t>(i)]);
    assert_disjoint(train.indices, test.indices, "inter-subject fold");
    train.labels = action_labels(pool, train.indices);
    test.labels = action_labels(pool, test.indices);

    CellStandardizer standardizer = zscore == ZscoreMode::CorpusFit
                                        ? fit_standardizer(pool, train.indices, channel_cells,
                                                           "train-fold-" + std::to_string(f))
                                        : CellStandardizer::identity();
    auto model = build_table1_model<S>(pool.front().time_steps, kActionClassCount,
                                       ModelKind::ActionRecognition, cfg.dropout_rate,
                                       Rng(cfg.seed).fork(static_cast<std::uint64_t>(f)).seed());
    train_model(model, train, nullptr, standardizer, cfg);
    result.folds.push_back({f, evaluate_classification(model, test, standardizer, cfg.batch_size)});
  }
  for (const auto& f : result.folds) {
    result.mean_accuracy += f.metrics.accuracy;
    result.mean_precision += f.metrics.macro_precision;
    result.mean_recall += f.metrics.macro_recall;
  }
  const auto k = static_cast<double>(result.folds.size());
  result.mean_accuracy /= k;
  result.mean_precision /= k;
  result.mean_recall /= k;
  return result;
}

struct UserOutcome {
  int subject_id = 0;
  ClassificationMetrics metrics;
  std::int64_t duplicate_windows = 0;  // leakage-guard finding, 0 expected
};

struct IntraSubjectResult {
  std::vector<UserOutcome> users;
  double mean_accuracy = 0.0;
};

/// One independent model per user on that user's windows, 90/10 split.
template <typename S = float>
IntraSubjectResult run_intra_subject(const std::vector<MeshSequence>& pool,
                                     const std::vector<int>& users,
                                     const std::vector<int>& channel_cells, const TrainConfig& cfg,
                                     ZscoreMode zscore = ZscoreMode::CorpusFit) {
  IntraSubjectResult result;
  for (int user : users) {
    std::vector<std::int64_t> mine;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool[i].subject_id == user) mine.push_back(static_cast<std::int64_t>(i));
    if (mine.size() < 10)
      throw InsufficientData("user " + std::to_string(user) + " has only " +
                             std::to_string(mine.size()) + " windows");
    // class-balance rest within this user's windows
    std::array<std::vector<std::int64_t>, kActionClassCount> by_class;
    for (auto i : mine) by_class[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)].action)].push_back(i);
    std::array<std::int64_t, kActionClassCount> counts{};
    for (int c = 0; c < kActionClassCount; ++c) counts[static_cast<std::size_t>(c)] = static_cast<std::int64_t>(by_class[static_cast<std::size_t>(c)].size());
    auto sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    const std::int64_t median = sorted[kActionClassCount / 2];
    auto& rest = by_class[static_cast<std::size_t>(ActionClass::RestClosedEyes)];
    if (static_cast<std::int64_t>(rest.size()) > median && median > 0) {
      Rng rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(user));
      rng.shuffle(rest);
      rest.resize(static_cast<std::size_t>(median));
    }
    mine.clear();
    for (const auto& cls : by_class) mine.insert(mine.end(), cls.begin(), cls.end());
    std::sort(mine.begin(), mine.end());

    Rng rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(user) * 2654435761ULL);
    rng.shuffle(mine);
    const auto n_test = std::max<std::int64_t>(1, static_cast<std::int64_t>(mine.size()) / 10);
    DataView test{&pool, {mine.begin(), mine.begin() + static_cast<std::ptrdiff_t>(n_test)}, {}};
    DataView train{&pool, {mine.begin() + static_cast<std::ptrdiff_t>(n_test), mine.end()}, {}};
    assert_disjoint(train.indices, test.indices, "intra-subject split");
    train.labels = action_labels(pool, train.indices);
    test.labels = action_labels(pool, test.indices);

    UserOutcome outcome;
    outcome.subject_id = user;
    outcome.duplicate_windows = count_duplicate_windows(train, test);

    CellStandardizer standardizer =
        zscore == ZscoreMode::CorpusFit
            ? fit_standardizer(pool, train.indices, channel_cells, "train-user-" + std::to_string(user))
            : CellStandardizer::identity();
    auto model = build_table1_model<S>(pool.front().time_steps, kActionClassCount,
                                       ModelKind::ActionRecognition, cfg.dropout_rate,
                                       Rng(cfg.seed).fork(static_cast<std::uint64_t>(user) + 7919).seed());
    train_model(model, train, nullptr, standardizer, cfg);
    outcome.metrics = evaluate_classification(model, test, standardizer, cfg.batch_size);
    result.mean_accuracy += outcome.metrics.accuracy;
    result.users.push_back(std::move(outcome));
  }
  result.mean_accuracy /= static_cast<double>(result.users.size());
  return result;
}

struct IdentificationResult {
  TrainResult curve;
  ClassificationMetrics test_metrics;
  std::map<int, int> subject_to_class;
  CellStandardizer standardizer;
  IdentificationSplit split;
};

/// Trains the identification model in place (the caller keeps it for
/// checkpointing and embedding extraction).
template <typename S = float>
IdentificationResult run_identification(ModelGraph<S>& model, const std::vector<MeshSequence>& pool,
                                        const std::vector<int>& channel_cells,
                                        std::array<double, 3> fractions, const TrainConfig& cfg,
                                        ZscoreMode zscore = ZscoreMode::CorpusFit) {
  IdentificationResult result;
  result.subject_to_class = subject_class_map(pool);
  if (static_cast<std::int64_t>(result.subject_to_class.size()) != model.classes())
    throw ShapeMismatch("model classes do not match subject count");

  auto kept = balance_rest_windows(pool, cfg.seed);
  std::vector<int> subject_of;
  subject_of.reserve(kept.size());
  for (auto i : kept) subject_of.push_back(pool[static_cast<std::size_t>(i)].subject_id);
  auto split = split_identification(subject_of, fractions, cfg.seed);
  auto remap = [&](std::vector<std::int64_t>& v) {
    for (auto& i : v) i = kept[static_cast<std::size_t>(i)];
  };
  remap(split.train);
  remap(split.val);
  remap(split.test);
  assert_disjoint(split.train, split.val, "identification train/val");
  assert_disjoint(split.train, split.test, "identification train/test");
  assert_disjoint(split.val, split.test, "identification val/test");

  DataView train{&pool, split.train, subject_labels(pool, split.train, result.subject_to_class)};
  DataView val{&pool, split.val, subject_labels(pool, split.val, result.subject_to_class)};
  DataView test{&pool, split.test, subject_labels(pool, split.test, result.subject_to_class)};

  result.standardizer = zscore == ZscoreMode::CorpusFit
                            ? fit_standardizer(pool, train.indices, channel_cells, "train-identification")
                            : CellStandardizer::identity();
  result.curve = train_model(model, train, val.size() > 0 ? &val : nullptr, result.standardizer, cfg);
  result.test_metrics = evaluate_classification(model, test, result.standardizer, cfg.batch_size);
  result.split = IdentificationSplit{train.indices, val.indices, test.indices};
  return result;
}

}  // namespace eegmesh
