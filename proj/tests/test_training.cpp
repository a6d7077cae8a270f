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

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "eegmesh/train.hpp"

using namespace eegmesh;

namespace {

/// Toy mesh pool: each subject/class pair gets a distinctive constant
/// pattern plus noise, at a small T so the full model stays fast.
std::vector<MeshSequence> toy_pool(int subjects, int per_class, std::int64_t t_steps,
                                   std::uint64_t seed, int classes = kActionClassCount) {
  const auto& layout = ElectrodeLayout::standard_10_10();
  auto cells = mesh_cells(layout, layout.electrodes());
  Rng rng(seed);
  std::vector<MeshSequence> pool;
  for (int s = 1; s <= subjects; ++s) {
    for (int c = 0; c < classes; ++c) {
      for (int k = 0; k < per_class; ++k) {
        MeshSequence mesh;
        mesh.time_steps = t_steps;
        mesh.values.assign(static_cast<std::size_t>(t_steps) * kGridCells, 0.0f);
        mesh.subject_id = s;
        mesh.run_id = c == 0 ? 2 : 2 * c + 2;
        mesh.action = static_cast<ActionClass>(c);
        mesh.trial_index = static_cast<std::uint16_t>(k);
        mesh.segment_index = static_cast<std::uint16_t>(k);
        mesh.phase = 1;
        for (std::int64_t t = 0; t < t_steps; ++t)
          for (std::size_t e = 0; e < cells.size(); ++e) {
            const double subject_part = 0.8 * s * ((e * 13 + 7) % 5 - 2);
            const double class_part = 1.5 * ((e + static_cast<std::size_t>(c) * 17) % 7 - 3);
            mesh.values[static_cast<std::size_t>(t * kGridCells + cells[e])] =
                static_cast<float>(subject_part + class_part + rng.normal(0.0, 0.2));
          }
        pool.push_back(std::move(mesh));
      }
    }
  }
  return pool;
}

TrainConfig tiny_config(int epochs, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// folds

TEST_CASE("ten folds partition 1000 examples into hundreds") {
  auto folds = make_folds(1000, 10, 7);
  REQUIRE(folds.size() == 10);
  std::set<std::int64_t> seen;
  for (const auto& f : folds) {
    CHECK(f.test.size() == 100);
    CHECK(f.train.size() == 900);
    for (auto i : f.test) {
      CHECK_FALSE(seen.count(i));
      seen.insert(i);
    }
    // train and test are disjoint within the fold
    std::set<std::int64_t> train_set(f.train.begin(), f.train.end());
    for (auto i : f.test) CHECK_FALSE(train_set.count(i));
  }
  CHECK(seen.size() == 1000);
}

TEST_CASE("fold membership is reproducible under a fixed seed") {
  auto a = make_folds(103, 10, 42);
  auto b = make_folds(103, 10, 42);
  auto c = make_folds(103, 10, 43);
  for (int f = 0; f < 10; ++f) {
    CHECK(a[static_cast<std::size_t>(f)].test == b[static_cast<std::size_t>(f)].test);
  }
  bool any_diff = false;
  for (int f = 0; f < 10; ++f)
    any_diff = any_diff || a[static_cast<std::size_t>(f)].test != c[static_cast<std::size_t>(f)].test;
  CHECK(any_diff);
}

TEST_CASE("folds reject too few examples") {
  CHECK_THROWS_AS(make_folds(5, 10, 1), TooFewExamples);
  CHECK_THROWS_AS(make_folds(100, 1, 1), TooFewExamples);
}

// ---------------------------------------------------------------------------
// identification split

TEST_CASE("fractional split sizes land within one example") {
  std::vector<int> subject_of(10000);
  for (std::size_t i = 0; i < subject_of.size(); ++i) subject_of[i] = static_cast<int>(i % 109) + 1;
  auto split = split_identification(subject_of, {0.75, 0.15, 0.10}, 5);
  CHECK(std::abs(static_cast<std::int64_t>(split.train.size()) - 7500) <= 1);
  CHECK(std::abs(static_cast<std::int64_t>(split.val.size()) - 1500) <= 1);
  CHECK(std::abs(static_cast<std::int64_t>(split.test.size()) - 1000) <= 1);
  CHECK(split.train.size() + split.val.size() + split.test.size() == 10000);
  // every subject appears in train
  std::set<int> train_subjects;
  for (auto i : split.train) train_subjects.insert(subject_of[static_cast<std::size_t>(i)]);
  CHECK(train_subjects.size() == 109);
}

TEST_CASE("degenerate fractions put everything in train") {
  std::vector<int> subject_of{1, 1, 2, 2, 3};
  auto split = split_identification(subject_of, {1.0, 0.0, 0.0}, 9);
  CHECK(split.train.size() == 5);
  CHECK(split.val.empty());
  CHECK(split.test.empty());
}

TEST_CASE("a subject with one window is pulled into train by the repair pass") {
  // subject 2 has a single window; whatever the shuffle does, it must train
  std::vector<int> subject_of{1, 1, 1, 1, 1, 1, 1, 1, 2};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto split = split_identification(subject_of, {0.5, 0.3, 0.2}, seed);
    bool found = false;
    for (auto i : split.train) found = found || subject_of[static_cast<std::size_t>(i)] == 2;
    CHECK(found);
  }
}

TEST_CASE("an impossible subject guarantee raises") {
  // one training slot, two subjects with one window each
  std::vector<int> subject_of{1, 2};
  CHECK_THROWS_AS(split_identification(subject_of, {0.5, 0.5, 0.0}, 3), SubjectMissingFromTrain);
}

// ---------------------------------------------------------------------------
// metrics

TEST_CASE("perfect predictions give unit accuracy, precision and recall") {
  std::vector<std::int64_t> confusion{3, 0, 0, 0, 4, 0, 0, 0, 5};
  auto m = metrics_from_confusion(confusion, 3);
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_precision == 1.0);
  CHECK(m.macro_recall == 1.0);
}

TEST_CASE("a worked 3-class confusion matrix matches hand arithmetic") {
  // rows = truth: [[2,0,0],[1,1,0],[0,0,2]]
  // accuracy = 5/6; per-class precision 2/3, 1, 1 -> macro 8/9;
  // per-class recall 1, 1/2, 1 -> macro 5/6
  std::vector<std::int64_t> confusion{2, 0, 0, 1, 1, 0, 0, 0, 2};
  auto m = metrics_from_confusion(confusion, 3);
  CHECK_THAT(m.accuracy, Catch::Matchers::WithinAbs(5.0 / 6.0, 1e-12));
  CHECK_THAT(m.macro_precision, Catch::Matchers::WithinAbs(8.0 / 9.0, 1e-12));
  CHECK_THAT(m.macro_recall, Catch::Matchers::WithinAbs(5.0 / 6.0, 1e-12));
  CHECK(m.total == 6);
  CHECK(m.at(1, 0) == 1);
}

TEST_CASE("macro metrics are invariant under class relabeling") {
  Rng rng(11);
  std::vector<std::int64_t> confusion(25);
  for (auto& v : confusion) v = rng.index(10);
  auto base = metrics_from_confusion(confusion, 5);
  // permute classes: new[p(i)][p(j)] = old[i][j]
  const int perm[5] = {3, 0, 4, 1, 2};
  std::vector<std::int64_t> permuted(25);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      permuted[static_cast<std::size_t>(perm[i] * 5 + perm[j])] =
          confusion[static_cast<std::size_t>(i * 5 + j)];
  auto relabeled = metrics_from_confusion(permuted, 5);
  CHECK_THAT(relabeled.accuracy, Catch::Matchers::WithinAbs(base.accuracy, 1e-12));
  CHECK_THAT(relabeled.macro_precision, Catch::Matchers::WithinAbs(base.macro_precision, 1e-12));
  CHECK_THAT(relabeled.macro_recall, Catch::Matchers::WithinAbs(base.macro_recall, 1e-12));
}

// ---------------------------------------------------------------------------
// balancing and leakage guards

TEST_CASE("rest windows are downsampled to the median class count") {
  auto pool = toy_pool(1, 4, 2, 21);
  // add extra rest windows so rest dominates
  auto extra = toy_pool(1, 10, 2, 22, 1);
  for (auto& m : extra) pool.push_back(std::move(m));
  std::array<std::int64_t, kActionClassCount> before{};
  for (const auto& m : pool) ++before[static_cast<std::size_t>(m.action)];
  REQUIRE(before[0] == 14);

  auto kept = balance_rest_windows(pool, 1);
  std::array<std::int64_t, kActionClassCount> after{};
  for (auto i : kept) ++after[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)].action)];
  CHECK(after[0] == 4);  // median of {14,4,4,4,4}
  for (int c = 1; c < kActionClassCount; ++c) CHECK(after[static_cast<std::size_t>(c)] == 4);
}

TEST_CASE("disjointness and duplicate-window guards fire") {
  std::vector<std::int64_t> a{1, 2, 3}, b{4, 5, 6}, c{3, 7};
  CHECK_NOTHROW(assert_disjoint(a, b, "unit"));
  CHECK_THROWS_AS(assert_disjoint(a, c, "unit"), ComputeError);

  auto pool = toy_pool(1, 2, 2, 23);
  pool.push_back(pool[0]);  // byte-identical duplicate
  DataView train{&pool, {0, 1, 2}, {0, 0, 0}};
  DataView test{&pool, {static_cast<std::int64_t>(pool.size()) - 1}, {0}};
  CHECK(count_duplicate_windows(train, test) == 1);
  DataView clean_test{&pool, {3, 4}, {0, 0}};
  CHECK(count_duplicate_windows(train, clean_test) == 0);
}

// ---------------------------------------------------------------------------
// optimization loop

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  auto pool = toy_pool(2, 3, 2, 24);
  DataView train{&pool, {}, {}};
  for (std::size_t i = 0; i < pool.size(); ++i) train.indices.push_back(static_cast<std::int64_t>(i));
  train.labels = action_labels(pool, train.indices);
  auto model = build_table1_model<float>(2, kActionClassCount, ModelKind::ActionRecognition, 0.5, 3);
  auto before = snapshot_state(model);
  TrainConfig cfg = tiny_config(1, 1);
  cfg.learning_rate = 0.0;
  train_model(model, train, nullptr, CellStandardizer::identity(), cfg);
  auto params = model.params();
  std::size_t k = 0;
  for (auto* p : params) CHECK(p->value.vec() == before[k++].vec());
}

TEST_CASE("fresh-init loss sits near ln K for five classes") {
  auto pool = toy_pool(1, 4, 2, 25);
  DataView batch{&pool, {}, {}};
  for (std::size_t i = 0; i < pool.size(); ++i) batch.indices.push_back(static_cast<std::int64_t>(i));
  batch.labels = action_labels(pool, batch.indices);
  auto model = build_table1_model<float>(2, 5, ModelKind::ActionRecognition, 0.5, 8);
  std::vector<std::int64_t> rows(batch.indices.size());
  std::iota(rows.begin(), rows.end(), 0);
  auto x = assemble_batch<float>(batch, rows, CellStandardizer::identity());
  auto logits = model.forward(make_tensor_ptr(std::move(x)), true);
  auto [loss, grad] = softmax_xent(*logits, batch.labels);
  CHECK(std::abs(loss - std::log(5.0)) < 0.2);
}

TEST_CASE("training loss trends downward over the first five epochs") {
  auto pool = toy_pool(2, 6, 2, 26);
  DataView train{&pool, {}, {}};
  for (std::size_t i = 0; i < pool.size(); ++i) train.indices.push_back(static_cast<std::int64_t>(i));
  train.labels = action_labels(pool, train.indices);
  auto model = build_table1_model<float>(2, kActionClassCount, ModelKind::ActionRecognition, 0.5, 9);
  auto result = train_model(model, train, nullptr, CellStandardizer::identity(), tiny_config(5, 2));
  REQUIRE(result.curve.size() == 5);
  std::vector<double> deltas;
  for (std::size_t e = 1; e < result.curve.size(); ++e)
    deltas.push_back(result.curve[e].train_loss - result.curve[e - 1].train_loss);
  std::sort(deltas.begin(), deltas.end());
  const double median = deltas[deltas.size() / 2];
  CHECK(median <= 0.0);
}

TEST_CASE("non-finite loss aborts with a divergence diagnostic") {
  auto pool = toy_pool(1, 3, 2, 27);
  pool[0].values[0] = std::numeric_limits<float>::quiet_NaN();
  DataView train{&pool, {}, {}};
  for (std::size_t i = 0; i < pool.size(); ++i) train.indices.push_back(static_cast<std::int64_t>(i));
  train.labels = action_labels(pool, train.indices);
  auto model = build_table1_model<float>(2, kActionClassCount, ModelKind::ActionRecognition, 0.5, 10);
  CHECK_THROWS_AS(train_model(model, train, nullptr, CellStandardizer::identity(), tiny_config(1, 3)),
                  DivergenceDetected);
}

TEST_CASE("standardizer files round trip") {
  namespace fs = std::filesystem;
  CellStandardizer s;
  s.provenance = "train-fold-3";
  for (int i = 0; i < kGridCells; ++i) {
    s.mean[static_cast<std::size_t>(i)] = i * 0.5;
    s.inv_std[static_cast<std::size_t>(i)] = 1.0 / (1.0 + i);
  }
  const fs::path path = fs::temp_directory_path() / "eegmesh_stats_test.bin";
  save_standardizer(s, path);
  auto loaded = load_standardizer(path);
  CHECK(loaded.provenance == s.provenance);
  CHECK(loaded.mean == s.mean);
  CHECK(loaded.inv_std == s.inv_std);
  fs::remove(path);
}

// ---------------------------------------------------------------------------
// protocols at toy scale

TEST_CASE("identification protocol trains, selects on validation and evaluates") {
  auto pool = toy_pool(3, 8, 2, 28);
  const auto& layout = ElectrodeLayout::standard_10_10();
  auto cells = mesh_cells(layout, layout.electrodes());
  auto model = build_table1_model<float>(2, 3, ModelKind::UserIdentification, 0.5, 11);
  TrainConfig cfg = tiny_config(3, 4);
  auto result = run_identification(model, pool, cells, {0.6, 0.2, 0.2}, cfg);
  CHECK(result.subject_to_class.size() == 3);
  CHECK(result.curve.curve.size() == 3);
  CHECK(result.curve.best_epoch >= 1);
  CHECK(result.test_metrics.total > 0);
  CHECK(result.standardizer.provenance == "train-identification");
  // toy patterns are separable; the model should beat chance clearly
  CHECK(result.test_metrics.accuracy > 0.5);
}

TEST_CASE("checkpoint round trip preserves validation accuracy") {
  namespace fs = std::filesystem;
  auto pool = toy_pool(3, 6, 2, 29);
  const auto& layout = ElectrodeLayout::standard_10_10();
  auto cells = mesh_cells(layout, layout.electrodes());
  auto model = build_table1_model<float>(2, 3, ModelKind::UserIdentification, 0.5, 12);
  TrainConfig cfg = tiny_config(2, 5);
  auto result = run_identification(model, pool, cells, {0.6, 0.2, 0.2}, cfg);

  DataView test{&pool, result.split.test, {}};
  test.labels = subject_labels(pool, test.indices, result.subject_to_class);
  auto before = evaluate_classification(model, test, result.standardizer);

  const fs::path path = fs::temp_directory_path() / "eegmesh_rt_ckpt.bin";
  save_checkpoint(model, path);
  auto loaded = load_checkpoint<float>(path);
  auto after = evaluate_classification(loaded.model, test, result.standardizer);
  CHECK(after.accuracy == before.accuracy);
  CHECK(after.confusion == before.confusion);
  fs::remove(path);
}

TEST_CASE("inter-subject cross validation covers every window exactly once") {
  auto pool = toy_pool(2, 4, 2, 30);
  const auto& layout = ElectrodeLayout::standard_10_10();
  auto cells = mesh_cells(layout, layout.electrodes());
  TrainConfig cfg = tiny_config(1, 6);
  auto result = run_inter_subject(pool, cells, cfg, 4);
  REQUIRE(result.folds.size() == 4);
  std::int64_t tested = 0;
  for (const auto& f : result.folds) tested += f.metrics.total;
  CHECK(tested == static_cast<std::int64_t>(pool.size()));
  CHECK(result.mean_accuracy >= 0.0);
  CHECK(result.mean_accuracy <= 1.0);
}

TEST_CASE("intra-subject runs train one model per user") {
  auto pool = toy_pool(2, 4, 2, 31);
  const auto& layout = ElectrodeLayout::standard_10_10();
  auto cells = mesh_cells(layout, layout.electrodes());
  TrainConfig cfg = tiny_config(1, 7);
  auto result = run_intra_subject(pool, {1, 2}, cells, cfg);
  REQUIRE(result.users.size() == 2);
  for (const auto& u : result.users) {
    CHECK(u.metrics.total > 0);
    CHECK(u.duplicate_windows == 0);
  }
  CHECK_THROWS_AS(run_intra_subject(pool, {9}, cells, cfg), InsufficientData);
}
