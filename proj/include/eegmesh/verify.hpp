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

// Verification on top of the identification model: 256-dim embeddings from
// the bidirectional-LSTM tap, full pairwise Euclidean distance matrices,
// threshold-swept ROC curves and the equal error rate. Four scenarios cross
// gesture-independent/dependent training with known/unknown verification
// users. Every unordered off-diagonal pair scores once; a pair is genuine
// when both windows come from the same subject. The EER is linearly
// interpolated between the two thresholds bracketing FAR = FRR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "eegmesh/dataset.hpp"
#include "eegmesh/errors.hpp"
#include "eegmesh/model.hpp"
#include "eegmesh/train.hpp"

namespace eegmesh {

struct Embedding {
  std::vector<float> vector;  // 256 floats
  int subject_id = 0;
  ActionClass gesture = ActionClass::RestClosedEyes;
  std::int64_t window_id = 0;
};

/// Runs inference and reads the activation right after the bidirectional
/// LSTM, before the class projection.
template <typename S>
std::vector<Embedding> embed_windows(ModelGraph<S>& model, const DataView& view,
                                     const CellStandardizer& standardizer, int batch_size = 32) {
  if (model.kind() != ModelKind::UserIdentification)
    throw WrongModelKind("embeddings require a user-identification model");
  std::vector<Embedding> out;
  out.reserve(static_cast<std::size_t>(view.size()));
  for (std::int64_t at = 0; at < view.size(); at += batch_size) {
    const auto take = std::min<std::int64_t>(batch_size, view.size() - at);
    std::vector<std::int64_t> rows(static_cast<std::size_t>(take));
    std::iota(rows.begin(), rows.end(), at);
    auto x = assemble_batch<S>(view, rows, standardizer);
    model.forward(make_tensor_ptr(std::move(x)), /*train=*/false);
    const auto& tap = *model.embedding_tap();
    if (tap.dim(1) != kEmbeddingDim) throw ShapeMismatch("unexpected embedding width");
    for (std::int64_t b = 0; b < take; ++b) {
      Embedding e;
      e.vector.resize(static_cast<std::size_t>(kEmbeddingDim));
      for (std::int64_t j = 0; j < kEmbeddingDim; ++j)
        e.vector[static_cast<std::size_t>(j)] = static_cast<float>(tap[b * kEmbeddingDim + j]);
      const auto& mesh = view.mesh(at + b);
      e.subject_id = mesh.subject_id;
      e.gesture = mesh.action;
      e.window_id = view.indices[static_cast<std::size_t>(at + b)];
      out.push_back(std::move(e));
    }
  }
  return out;
}

template <typename S>
Embedding embed(ModelGraph<S>& model, const MeshSequence& window,
                const CellStandardizer& standardizer) {
  std::vector<MeshSequence> pool{window};
  DataView view{&pool, {0}, {0}};
  return embed_windows(model, view, standardizer, 1).front();
}

struct DistanceMatrix {
  std::int64_t size = 0;
  std::vector<float> values;  // [P x P], symmetric, zero diagonal
  std::vector<int> subject;   // row metadata
  std::vector<ActionClass> gesture;

  float at(std::int64_t i, std::int64_t j) const {
    return values[static_cast<std::size_t>(i * size + j)];
  }
};

inline DistanceMatrix distance_matrix(std::span<const Embedding> embeddings) {
  const auto p = static_cast<std::int64_t>(embeddings.size());
  if (p < 2) throw DegeneratePairs("distance matrix needs at least two embeddings");
  const auto dim = embeddings[0].vector.size();
  DistanceMatrix m;
  m.size = p;
  m.values.assign(static_cast<std::size_t>(p) * static_cast<std::size_t>(p), 0.0f);
  m.subject.reserve(static_cast<std::size_t>(p));
  m.gesture.reserve(static_cast<std::size_t>(p));
  for (const auto& e : embeddings) {
    if (e.vector.size() != dim) throw DimensionMismatch("embedding dimensions differ");
    m.subject.push_back(e.subject_id);
    m.gesture.push_back(e.gesture);
  }
  for (std::int64_t i = 0; i < p; ++i) {
    for (std::int64_t j = i + 1; j < p; ++j) {
      double acc = 0.0;
      const auto& a = embeddings[static_cast<std::size_t>(i)].vector;
      const auto& b = embeddings[static_cast<std::size_t>(j)].vector;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        acc += d * d;
      }
      const auto dist = static_cast<float>(std::sqrt(acc));
      m.values[static_cast<std::size_t>(i * p + j)] = dist;
      m.values[static_cast<std::size_t>(j * p + i)] = dist;
    }
  }
  return m;
}

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  // impostor pairs accepted (distance <= threshold)
  double frr = 0.0;  // genuine pairs rejected (distance > threshold)
};

struct VerificationReport {
  std::string scenario;
  std::string gesture = "all";
  double eer = 0.0;
  double threshold_at_eer = 0.0;
  std::int64_t genuine_pairs = 0;
  std::int64_t impostor_pairs = 0;
  double rank1_rate = 0.0;  // auxiliary nearest-neighbour identification rate
  std::vector<RocPoint> roc;
};

/// ROC over raw match scores (distances; lower means more similar). Every
/// distinct score value is swept as an acceptance threshold, plus a virtual
/// reject-all point anchoring (FAR 0, FRR 1).
inline VerificationReport roc_from_scores(std::vector<double> genuine, std::vector<double> impostor) {
  if (genuine.empty() || impostor.empty())
    throw DegeneratePairs("need at least one genuine and one impostor pair");
  VerificationReport report;
  report.genuine_pairs = static_cast<std::int64_t>(genuine.size());
  report.impostor_pairs = static_cast<std::int64_t>(impostor.size());

  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());
  std::vector<double> thresholds;
  thresholds.reserve(genuine.size() + impostor.size() + 1);
  thresholds.insert(thresholds.end(), genuine.begin(), genuine.end());
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const auto ng = static_cast<double>(genuine.size());
  const auto ni = static_cast<double>(impostor.size());
  report.roc.reserve(thresholds.size() + 1);
  report.roc.push_back({thresholds.front(), 0.0, 1.0});  // virtual reject-all anchor
  for (double th : thresholds) {
    const auto g_acc = std::upper_bound(genuine.begin(), genuine.end(), th) - genuine.begin();
    const auto i_acc = std::upper_bound(impostor.begin(), impostor.end(), th) - impostor.begin();
    report.roc.push_back({th, static_cast<double>(i_acc) / ni,
                          1.0 - static_cast<double>(g_acc) / ng});
  }

  // first index where FAR >= FRR, then interpolate inside the bracket
  std::size_t k = report.roc.size() - 1;
  for (std::size_t i = 0; i < report.roc.size(); ++i) {
    if (report.roc[i].far >= report.roc[i].frr) {
      k = i;
      break;
    }
  }
  if (k == 0) {
    report.eer = (report.roc[0].far + report.roc[0].frr) / 2.0;
    report.threshold_at_eer = report.roc[0].threshold;
  } else {
    const auto& lo = report.roc[k - 1];
    const auto& hi = report.roc[k];
    const double d1 = lo.frr - lo.far;  // >= 0
    const double d2 = hi.far - hi.frr;  // >= 0
    const double t = (d1 + d2) > 0 ? d1 / (d1 + d2) : 0.0;
    report.eer = lo.far + t * (hi.far - lo.far);
    report.threshold_at_eer = lo.threshold + t * (hi.threshold - lo.threshold);
  }
  return report;
}

/// Scores all unordered off-diagonal pairs of the matrix; genuine means the
/// two windows share a subject. Also fills the rank-1 identification rate.
inline VerificationReport roc_and_eer(const DistanceMatrix& m) {
  std::vector<double> genuine, impostor;
  for (std::int64_t i = 0; i < m.size; ++i)
    for (std::int64_t j = i + 1; j < m.size; ++j)
      (m.subject[static_cast<std::size_t>(i)] == m.subject[static_cast<std::size_t>(j)] ? genuine
                                                                                        : impostor)
          .push_back(m.at(i, j));
  auto report = roc_from_scores(std::move(genuine), std::move(impostor));

  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < m.size; ++i) {
    std::int64_t best = -1;
    for (std::int64_t j = 0; j < m.size; ++j) {
      if (j == i) continue;
      if (best < 0 || m.at(i, j) < m.at(i, best)) best = j;
    }
    if (best >= 0 &&
        m.subject[static_cast<std::size_t>(best)] == m.subject[static_cast<std::size_t>(i)])
      ++hits;
  }
  report.rank1_rate = static_cast<double>(hits) / static_cast<double>(m.size);
  return report;
}

enum class Scenario : std::uint8_t {
  GI_KU = 0,  // gesture-independent, known users
  GI_UU = 1,  // gesture-independent, unknown users
  GD_KU = 2,  // gesture-dependent, known users
  GD_UU = 3,  // gesture-dependent, unknown users
};

inline const char* scenario_label(Scenario s) {
  switch (s) {
    case Scenario::GI_KU: return "GI-KU";
    case Scenario::GI_UU: return "GI-UU";
    case Scenario::GD_KU: return "GD-KU";
    case Scenario::GD_UU: return "GD-UU";
  }
  return "?";
}

inline Scenario scenario_by_name(std::string_view text) {
  std::string key;
  for (char c : text) key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  for (auto s : {Scenario::GI_KU, Scenario::GI_UU, Scenario::GD_KU, Scenario::GD_UU})
    if (key == scenario_label(s)) return s;
  throw UsageError("unknown scenario: " + std::string(text) +
                   " (expected GI-KU|GI-UU|GD-KU|GD-UU)");
}

struct ScenarioConfig {
  TrainConfig train;
  std::array<double, 3> fractions{0.75, 0.15, 0.10};
  int holdout_users = 10;          // UU scenarios: verification-only subjects
  std::int64_t max_windows_per_user = 200;  // cap on the pairwise matrix size
  ZscoreMode zscore = ZscoreMode::CorpusFit;
};

struct ScenarioResult {
  Scenario scenario = Scenario::GI_KU;
  std::vector<VerificationReport> per_gesture;  // GD scenarios, one per class
  VerificationReport pooled;                    // GI scenarios
  double mean_eer = 0.0;
  std::vector<int> train_subjects, verify_subjects;
};

namespace verify_detail {

/// Highest subject ids form the unknown-user hold-out by default.
inline std::pair<std::vector<int>, std::vector<int>> split_users(const std::vector<int>& subjects,
                                                                 int holdout) {
  std::vector<int> sorted = subjects;
  std::sort(sorted.begin(), sorted.end());
  if (holdout <= 0 || holdout >= static_cast<int>(sorted.size()))
    throw ScenarioDataMissing("hold-out size must leave at least one training subject");
  std::vector<int> train(sorted.begin(), sorted.end() - holdout);
  std::vector<int> held(sorted.end() - holdout, sorted.end());
  return {train, held};
}

inline std::vector<std::int64_t> windows_of_subjects(const std::vector<MeshSequence>& pool,
                                                     const std::vector<int>& subjects,
                                                     std::optional<ActionClass> gesture) {
  std::set<int> wanted(subjects.begin(), subjects.end());
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!wanted.count(pool[i].subject_id)) continue;
    if (gesture && pool[i].action != *gesture) continue;
    out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

/// Seeded per-subject cap keeps the pairwise matrix tractable on the full
/// corpus without biasing toward any class.
inline std::vector<std::int64_t> cap_per_subject(const std::vector<MeshSequence>& pool,
                                                 std::vector<std::int64_t> indices,
                                                 std::int64_t cap, std::uint64_t seed) {
  if (cap <= 0) return indices;
  std::map<int, std::vector<std::int64_t>> by_subject;
  for (auto i : indices) by_subject[pool[static_cast<std::size_t>(i)].subject_id].push_back(i);
  std::vector<std::int64_t> out;
  for (auto& [subject, windows] : by_subject) {
    if (static_cast<std::int64_t>(windows.size()) > cap) {
      Rng rng = Rng(seed).fork(static_cast<std::uint64_t>(subject) + 0xca9);
      rng.shuffle(windows);
      windows.resize(static_cast<std::size_t>(cap));
      std::sort(windows.begin(), windows.end());
    }
    out.insert(out.end(), windows.begin(), windows.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace verify_detail

/// Trains the scenario's identification model(s) and scores verification
/// pairs. KU scenarios verify on the identification split's test windows;
/// UU scenarios train on the retained users and verify on all windows of the
/// held-out users, asserting the two sets are disjoint.
template <typename S = float>
ScenarioResult run_scenario(Scenario scenario, const std::vector<MeshSequence>& pool,
                            const std::vector<int>& channel_cells, const ScenarioConfig& cfg) {
  using namespace verify_detail;
  const bool unknown_users = scenario == Scenario::GI_UU || scenario == Scenario::GD_UU;
  const bool per_gesture = scenario == Scenario::GD_KU || scenario == Scenario::GD_UU;

  std::vector<int> all_subjects;
  for (const auto& m : pool)
    if (all_subjects.empty() || all_subjects.back() != m.subject_id) all_subjects.push_back(m.subject_id);
  std::sort(all_subjects.begin(), all_subjects.end());
  all_subjects.erase(std::unique(all_subjects.begin(), all_subjects.end()), all_subjects.end());

  ScenarioResult result;
  result.scenario = scenario;
  if (unknown_users) {
    auto [train_users, held_users] = split_users(all_subjects, cfg.holdout_users);
    result.train_subjects = train_users;
    result.verify_subjects = held_users;
  } else {
    result.train_subjects = all_subjects;
    result.verify_subjects = all_subjects;
  }

  auto run_one = [&](std::optional<ActionClass> gesture) -> VerificationReport {
    // training pool: retained users, one gesture or all
    auto train_idx = windows_of_subjects(pool, result.train_subjects, gesture);
    std::vector<MeshSequence> train_pool;
    train_pool.reserve(train_idx.size());
    for (auto i : train_idx) train_pool.push_back(pool[static_cast<std::size_t>(i)]);
    if (train_pool.empty())
      throw ScenarioDataMissing(std::string("no training windows for scenario ") +
                                scenario_label(scenario));

    const auto gestures_in_train = [&] {
      std::set<ActionClass> s;
      for (const auto& m : train_pool) s.insert(m.action);
      return s;
    }();
    if (gesture && gestures_in_train.size() != 1)
      throw ScenarioDataMissing("gesture-dependent pool is not single-gesture");
    const auto subjects_in_train = [&] {
      std::set<int> s;
      for (const auto& m : train_pool) s.insert(m.subject_id);
      return s;
    }();
    if (subjects_in_train.size() != result.train_subjects.size())
      throw ScenarioDataMissing("a training subject has no windows for this gesture");

    TrainConfig tcfg = cfg.train;
    if (gesture)
      tcfg.seed = Rng(cfg.train.seed).fork(static_cast<std::uint64_t>(*gesture) + 0x9e).seed();
    auto model = build_table1_model<S>(pool.front().time_steps,
                                       static_cast<std::int64_t>(result.train_subjects.size()),
                                       ModelKind::UserIdentification, tcfg.dropout_rate, tcfg.seed);
    auto ident = run_identification(model, train_pool, channel_cells, cfg.fractions, tcfg, cfg.zscore);

    // verification windows
    DataView verify{&pool, {}, {}};
    if (unknown_users) {
      verify.indices = windows_of_subjects(pool, result.verify_subjects, gesture);
      // disjointness assertion: held-out users never appear in training
      std::set<int> train_set(result.train_subjects.begin(), result.train_subjects.end());
      for (int u : result.verify_subjects)
        if (train_set.count(u))
          throw ComputeError("unknown-user scenario: verification subject found in training set");
    } else {
      // known users: the identification test partition (indices into train_pool
      // map back to the shared pool through train_idx)
      for (auto i : ident.split.test) verify.indices.push_back(train_idx[static_cast<std::size_t>(i)]);
    }
    verify.indices = cap_per_subject(pool, std::move(verify.indices), cfg.max_windows_per_user,
                                     cfg.train.seed);
    if (verify.indices.size() < 2)
      throw ScenarioDataMissing("not enough verification windows");
    verify.labels.assign(verify.indices.size(), 0);

    auto embeddings = embed_windows(model, verify, ident.standardizer, cfg.train.batch_size);
    auto report = roc_and_eer(distance_matrix(embeddings));
    report.scenario = scenario_label(scenario);
    report.gesture = gesture ? action_label(*gesture) : "all";
    return report;
  };

  if (per_gesture) {
    for (int c = 0; c < kActionClassCount; ++c) {
      auto report = run_one(static_cast<ActionClass>(c));
      result.mean_eer += report.eer;
      result.per_gesture.push_back(std::move(report));
    }
    result.mean_eer /= kActionClassCount;
  } else {
    result.pooled = run_one(std::nullopt);
    result.mean_eer = result.pooled.eer;
  }
  return result;
}

}  // namespace eegmesh
