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

// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line; the exit
// code is the failure count. The two desk-scale criteria train the full
// model on a five-subject corpus: the real dataset root when
// EEGMESH_DATASET_ROOT is set, otherwise a synthetic corpus written through
// the toolkit's own EDF writer. Expect roughly 1.5-2 hours on two CPU cores
// for the whole suite; `--only <substring>` selects criteria, `--list`
// shows them.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "eegmesh/cache.hpp"
#include "eegmesh/dataset.hpp"
#include "eegmesh/edf.hpp"
#include "eegmesh/manifest.hpp"
#include "eegmesh/model.hpp"
#include "eegmesh/optim.hpp"
#include "eegmesh/preprocess.hpp"
#include "eegmesh/report.hpp"
#include "eegmesh/train.hpp"
#include "eegmesh/verify.hpp"
#include "support/gradcheck.hpp"
#include "support/synthetic_corpus.hpp"

namespace fs = std::filesystem;
using namespace eegmesh;

namespace {

// -------------------------------------------------------------------------
// helpers

std::string fail(const std::string& message) { return message; }
const std::string kPass;

#define EXPECT(cond, message)                 \
  do {                                        \
    if (!(cond)) return fail(message);        \
  } while (0)

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "eegmesh_acceptance";
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

int desk_epochs() {
  if (const char* env = std::getenv("EEGMESH_DESK_EPOCHS")) return std::atoi(env);
  return 20;
}

/// Five-subject corpus for the desk-scale runs: the real dataset when
/// mounted, else a synthetic one with the same layout.
const fs::path& corpus_root() {
  static const fs::path root = [] {
    if (const char* env = std::getenv("EEGMESH_DATASET_ROOT")) {
      std::fprintf(stderr, "# desk-scale runs use the mounted dataset at %s\n", env);
      return fs::path(env);
    }
    fs::path p = work_dir() / "corpus";
    if (!fs::exists(p / "S001" / "S001R02.edf")) {
      test::SyntheticSpec spec;
      spec.subjects = 5;
      spec.trials_per_task_run = 2;
      spec.rest_seconds = 8.0;
      spec.seed = 20260809;
      test::make_synthetic_corpus(p, spec);
    }
    return p;
  }();
  return root;
}

std::vector<int> desk_subjects() {
  auto files = scan_corpus(corpus_root());
  auto subjects = corpus_subjects(files);
  if (subjects.empty()) return {};
  std::vector<int> present_exclusions;
  for (int e : default_excluded_subjects())
    if (std::find(subjects.begin(), subjects.end(), e) != subjects.end())
      present_exclusions.push_back(e);
  subjects = filter_subjects(subjects, present_exclusions);
  if (subjects.size() > 5) subjects.resize(5);
  return subjects;
}

std::vector<MeshSequence> load_pool(const std::vector<int>& subjects, double window_seconds,
                                    SubsetName subset) {
  const auto& layout = ElectrodeLayout::standard_10_10();
  PreprocessOptions opt;
  opt.window_seconds = window_seconds;
  opt.phase_count = 4;
  opt.subset = subset_config(subset);
  std::set<int> wanted(subjects.begin(), subjects.end());
  std::vector<MeshSequence> pool;
  for (const auto& file : scan_corpus(corpus_root())) {
    if (!wanted.count(file.subject_id) || !is_admissible_run(file.run_id)) continue;
    auto rec = parse_edf_file(file.path);
    if (rec.sample_rate != 160.0) continue;
    for (auto& mesh : preprocess_recording(rec, opt, layout)) pool.push_back(std::move(mesh));
  }
  return pool;
}

// -------------------------------------------------------------------------
// 1. preprocessing property suite

std::string check_preprocessing_properties() {
  // phased-subsample partition and reconstruction
  for (auto [m, n] : std::vector<std::pair<std::int64_t, int>>{{80, 4}, {160, 4}, {40, 4}, {8, 2}}) {
    LabeledTrial trial;
    trial.n_samples = m;
    trial.signal.resize(static_cast<std::size_t>(m) * kElectrodeCount);
    Rng rng(static_cast<std::uint64_t>(m) * 17 + static_cast<std::uint64_t>(n));
    for (auto& v : trial.signal) v = static_cast<float>(rng.normal());
    auto seg = segment_trial(trial, m).front();
    auto stack = phased_subsample(seg, n);
    EXPECT(static_cast<int>(stack.sub_segments.size()) == n, "phase count mismatch");
    EXPECT(stack.sub_length == m / n, "sub-segment length mismatch");
    // partition: each index lands in exactly one sub-segment, reconstruction
    // interleaves back to the original
    for (std::int64_t i = 0; i < m; ++i) {
      const auto& sub = stack.sub_segments[static_cast<std::size_t>(i % n)];
      for (int ch = 0; ch < kElectrodeCount; ch += 13) {
        if (sub[static_cast<std::size_t>((i / n) * kElectrodeCount + ch)] != seg.at(i, ch))
          return fail("reconstruction failed for M=" + std::to_string(m) +
                      " N=" + std::to_string(n));
      }
    }
  }

  // z-score post-conditions on the fitting population
  std::vector<Segment> segments;
  for (int s = 0; s < 8; ++s) {
    LabeledTrial trial;
    trial.n_samples = 160;
    trial.signal.resize(static_cast<std::size_t>(160) * kElectrodeCount);
    Rng rng(900 + static_cast<std::uint64_t>(s));
    for (std::size_t i = 0; i < trial.signal.size(); ++i)
      trial.signal[i] = static_cast<float>(rng.normal(static_cast<double>(i % 64), 2.5));
    segments.push_back(segment_trial(trial, 160).front());
  }
  auto stats = zscore_fit({segments.data(), segments.size()}, "acceptance");
  for (auto& seg : segments) zscore_apply(&seg, stats);
  for (int ch = 0; ch < kElectrodeCount; ++ch) {
    double sum = 0, sumsq = 0;
    std::int64_t count = 0;
    for (const auto& seg : segments)
      for (std::int64_t i = 0; i < seg.window_samples; ++i) {
        sum += seg.at(i, ch);
        sumsq += static_cast<double>(seg.at(i, ch)) * seg.at(i, ch);
        ++count;
      }
    const double mean = sum / static_cast<double>(count);
    const double sd = std::sqrt(std::max(0.0, sumsq / static_cast<double>(count) - mean * mean));
    EXPECT(std::abs(mean) < 1e-6, "post-fit |mean| >= 1e-6");
    EXPECT(std::abs(sd - 1.0) < 1e-6, "post-fit |std - 1| >= 1e-6");
  }

  // mesh injectivity: 64 occupied cells, 46 empty
  const auto& layout = ElectrodeLayout::standard_10_10();
  auto occupancy = layout.occupancy();
  int occupied = 0;
  for (bool b : occupancy) occupied += b ? 1 : 0;
  EXPECT(occupied == 64, "expected 64 occupied cells");
  EXPECT(kGridCells - occupied == 46, "expected 46 empty cells");
  std::set<int> distinct;
  for (const auto& name : layout.electrodes()) distinct.insert(layout.cell_of(name).flat());
  EXPECT(distinct.size() == 64, "two electrodes share a cell");

  // mask idempotence
  auto cells = mesh_cells(layout, layout.electrodes());
  MeshSequence mesh;
  mesh.time_steps = 20;
  mesh.values.resize(static_cast<std::size_t>(20) * kGridCells);
  Rng rng(42);
  for (std::int64_t t = 0; t < 20; ++t)
    for (int ch = 0; ch < kElectrodeCount; ++ch)
      mesh.values[static_cast<std::size_t>(t * kGridCells + cells[static_cast<std::size_t>(ch)])] =
          static_cast<float>(rng.normal());
  for (auto subset : {SubsetName::Enobio8, SubsetName::EEGlass4, SubsetName::EEGlass3,
                      SubsetName::EEGlass2}) {
    auto once = mesh;
    apply_subset(&once, subset_config(subset), layout);
    auto twice = once;
    apply_subset(&twice, subset_config(subset), layout);
    EXPECT(once.values == twice.values, std::string("masking not idempotent for ") +
                                            subset_label(subset));
  }
  return kPass;
}

// -------------------------------------------------------------------------
// 2. gradient verification

std::string check_gradients() {
  Rng init(77);
  auto layer_check = [&](Layer<double>& layer, Tensor<double> input, std::uint64_t seed,
                         const char* name) -> std::string {
    auto res = test::gradcheck_layer(layer, std::move(input), 20, seed);
    if (res.max_rel_error > 1e-4)
      return fail(std::string(name) + " relative error " + std::to_string(res.max_rel_error) +
                  " at " + res.worst);
    return kPass;
  };
  auto randn = [](typename Tensor<double>::Shape shape, std::uint64_t seed) {
    Tensor<double> t(std::move(shape));
    Rng rng(seed);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return t;
  };

  {
    TimeDistConv3x3<double> conv(3, 5, init);
    if (auto r = layer_check(conv, randn({2, 3, 10, 11, 3}, 1), 11, "conv"); !r.empty()) return r;
  }
  {
    BatchNorm<double> bn(6);
    if (auto r = layer_check(bn, randn({4, 3, 6}, 2), 12, "batch-norm"); !r.empty()) return r;
  }
  {
    Elu<double> elu;
    if (auto r = layer_check(elu, randn({5, 9}, 3), 13, "elu"); !r.empty()) return r;
  }
  {
    TimeDistFlatten<double> flatten;
    if (auto r = layer_check(flatten, randn({2, 3, 4, 5, 2}, 4), 14, "flatten"); !r.empty()) return r;
  }
  {
    Dense<double> dense(10, 7, init);
    if (auto r = layer_check(dense, randn({6, 10}, 5), 15, "dense"); !r.empty()) return r;
  }
  {
    Dropout<double> dropout(0.5);
    if (auto r = layer_check(dropout, randn({6, 12}, 6), 16, "dropout"); !r.empty()) return r;
  }
  {
    BiLstm<double> lstm(7, 4, init);
    if (auto r = layer_check(lstm, randn({3, 5, 7}, 7), 17, "bilstm"); !r.empty()) return r;
  }

  // composed model through the cross-entropy loss
  auto model = build_table1_model<double>(4, 5, ModelKind::ActionRecognition, 0.5, 99);
  auto res = test::gradcheck_model(model, randn({2, 4, 10, 11, 1}, 8), {2, 4}, 20, 18);
  EXPECT(res.max_rel_error <= 1e-3,
         "composed model relative error " + std::to_string(res.max_rel_error) + " at " + res.worst);
  return kPass;
}

// -------------------------------------------------------------------------
// 3. optimization sanity

std::string check_optimization_sanity() {
  auto subjects = desk_subjects();
  EXPECT(!subjects.empty(), "no corpus subjects available");
  auto pool = load_pool(subjects, 0.5, SubsetName::Full);
  EXPECT(pool.size() >= 32, "corpus yielded fewer than 32 windows");

  // stratified batch of 32 real preprocessed windows
  std::array<std::vector<std::int64_t>, kActionClassCount> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i)
    by_class[static_cast<std::size_t>(pool[i].action)].push_back(static_cast<std::int64_t>(i));
  Rng rng(4242);
  for (auto& v : by_class) rng.shuffle(v);
  DataView batch{&pool, {}, {}};
  for (int k = 0; batch.indices.size() < 32; ++k) {
    const auto& v = by_class[static_cast<std::size_t>(k % kActionClassCount)];
    const auto take = static_cast<std::size_t>(k / kActionClassCount);
    if (take < v.size()) batch.indices.push_back(v[take]);
  }
  batch.labels = action_labels(pool, batch.indices);

  const auto& layout = ElectrodeLayout::standard_10_10();
  auto cells = mesh_cells(layout, layout.electrodes());
  auto standardizer = fit_standardizer(pool, batch.indices, cells, "overfit-batch");

  auto model = build_table1_model<float>(pool.front().time_steps, kActionClassCount,
                                         ModelKind::ActionRecognition, 0.5, 777);
  std::vector<std::int64_t> rows(32);
  std::iota(rows.begin(), rows.end(), 0);
  auto x = assemble_batch<float>(batch, rows, standardizer);
  auto x_ptr = make_tensor_ptr(std::move(x));

  // fresh-init loss within 0.2 of ln 5
  auto logits0 = model.forward(x_ptr, true);
  auto [loss0, grad0] = softmax_xent(*logits0, batch.labels);
  EXPECT(std::abs(loss0 - std::log(5.0)) <= 0.2,
         "fresh-init loss " + std::to_string(loss0) + " not within 0.2 of ln 5");

  // 100% training accuracy within 200 Adam steps
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = 1e-4;
  Adam<float> adam(model.params(), adam_cfg);
  int reached = -1;
  for (int step = 1; step <= 200; ++step) {
    auto logits = model.forward(x_ptr, true);
    auto [loss, grad] = softmax_xent(*logits, batch.labels);
    EXPECT(std::isfinite(loss), "loss diverged during overfitting");
    model.zero_grad();
    model.backward(std::move(grad));
    adam.step();
    // training accuracy on the same batch
    auto eval = model.forward(x_ptr, false);
    int correct = 0;
    for (std::int64_t b = 0; b < 32; ++b) {
      const float* row = eval->data() + b * kActionClassCount;
      int best = 0;
      for (int j = 1; j < kActionClassCount; ++j)
        if (row[j] > row[best]) best = j;
      correct += best == batch.labels[static_cast<std::size_t>(b)] ? 1 : 0;
    }
    if (correct == 32) {
      reached = step;
      break;
    }
  }
  EXPECT(reached > 0, "did not reach 100% training accuracy within 200 Adam steps");
  std::fprintf(stderr, "# overfit reached 32/32 at step %d\n", reached);
  return kPass;
}

// -------------------------------------------------------------------------
// 4. EER oracle equivalence

std::string check_eer_oracle() {
  // 1000 synthetic scores from overlapping Gaussians
  Rng rng(606);
  std::vector<double> genuine, impostor;
  for (int i = 0; i < 500; ++i) {
    genuine.push_back(rng.normal(1.0, 0.3));
    impostor.push_back(rng.normal(1.6, 0.3));
  }
  auto report = roc_from_scores(genuine, impostor);

  // oracle: exhaustive sweep over every distinct threshold
  std::vector<double> all = genuine;
  all.insert(all.end(), impostor.begin(), impostor.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  double best_gap = 2.0, oracle = 1.0;
  for (double th : all) {
    std::int64_t fa = 0, fr = 0;
    for (double d : impostor) fa += d <= th ? 1 : 0;
    for (double d : genuine) fr += d > th ? 1 : 0;
    const double far = static_cast<double>(fa) / 500.0;
    const double frr = static_cast<double>(fr) / 500.0;
    if (std::abs(far - frr) < best_gap) {
      best_gap = std::abs(far - frr);
      oracle = (far + frr) / 2.0;
    }
  }
  EXPECT(std::abs(report.eer - oracle) <= 1.0 / 500.0,
         "swept EER " + std::to_string(report.eer) + " vs oracle " + std::to_string(oracle));

  // separable case
  auto separable = roc_from_scores({0.1, 0.2, 0.35}, {0.9, 1.4, 2.0});
  EXPECT(separable.eer == 0.0, "separable scores must give EER 0");

  // identical distributions
  std::vector<double> g2, i2;
  Rng rng2(707);
  for (int i = 0; i < 500; ++i) {
    g2.push_back(rng2.normal(1.0, 0.25));
    i2.push_back(rng2.normal(1.0, 0.25));
  }
  auto chance = roc_from_scores(g2, i2);
  EXPECT(std::abs(chance.eer - 0.5) <= 0.05,
         "chance-level EER " + std::to_string(chance.eer) + " outside 0.50 +/- 0.05");
  return kPass;
}

// -------------------------------------------------------------------------
// 5. desk-scale identification

std::string check_desk_identification() {
  auto subjects = desk_subjects();
  EXPECT(subjects.size() >= 2, "need at least two subjects");
  auto pool = load_pool(subjects, 1.0, SubsetName::Full);
  EXPECT(!pool.empty(), "empty mesh pool");
  std::fprintf(stderr, "# identification pool: %zu subjects, %zu windows (T=%lld)\n",
               subjects.size(), pool.size(), static_cast<long long>(pool.front().time_steps));

  const auto& layout = ElectrodeLayout::standard_10_10();
  auto cells = mesh_cells(layout, layout.electrodes());
  TrainConfig cfg;
  cfg.epochs = desk_epochs();
  cfg.learning_rate = 1e-4;
  cfg.batch_size = 32;
  cfg.seed = 424242;
  cfg.on_epoch = [](int epoch, double loss, double val) {
    std::fprintf(stderr, "#   epoch %2d loss %.4f val %.4f\n", epoch, loss, val);
  };
  auto model = build_table1_model<float>(pool.front().time_steps,
                                         static_cast<std::int64_t>(subjects.size()),
                                         ModelKind::UserIdentification, 0.5, cfg.seed);
  auto result = run_identification(model, pool, cells, {0.75, 0.15, 0.10}, cfg);
  std::fprintf(stderr, "# held-out accuracy %.4f over %lld windows\n",
               result.test_metrics.accuracy, static_cast<long long>(result.test_metrics.total));
  EXPECT(result.test_metrics.accuracy >= 0.95,
         "held-out accuracy " + std::to_string(result.test_metrics.accuracy) + " below 0.95");
  return kPass;
}

// -------------------------------------------------------------------------
// 6. desk-scale subset ordering

std::string check_desk_subset_ordering() {
  auto subjects = desk_subjects();
  EXPECT(subjects.size() >= 2, "need at least two subjects");
  const auto& layout = ElectrodeLayout::standard_10_10();
  auto cells = mesh_cells(layout, layout.electrodes());

  double accuracy[2] = {0, 0};
  const SubsetName subsets[2] = {SubsetName::Full, SubsetName::EEGlass2};
  for (int i = 0; i < 2; ++i) {
    auto pool = load_pool(subjects, 0.5, subsets[i]);
    EXPECT(!pool.empty(), "empty mesh pool");
    TrainConfig cfg;
    cfg.epochs = desk_epochs();
    cfg.learning_rate = 1e-4;
    cfg.batch_size = 32;
    cfg.seed = 515151;
    auto model = build_table1_model<float>(pool.front().time_steps,
                                           static_cast<std::int64_t>(subjects.size()),
                                           ModelKind::UserIdentification, 0.5, cfg.seed);
    auto result = run_identification(model, pool, cells, {0.75, 0.15, 0.10}, cfg);
    accuracy[i] = result.test_metrics.accuracy;
    std::fprintf(stderr, "# %s identification accuracy %.4f\n", subset_label(subsets[i]),
                 accuracy[i]);
  }
  EXPECT(accuracy[0] > accuracy[1],
         "full-montage accuracy " + std::to_string(accuracy[0]) +
             " does not strictly exceed the two-electrode mask " + std::to_string(accuracy[1]));
  return kPass;
}

// -------------------------------------------------------------------------
// 7. reference comparison machinery (full runs are opt-in, multi-hour)

std::string check_reference_report() {
  const fs::path dir = work_dir() / "report_emitter";
  fs::remove_all(dir);
  fs::create_directories(dir / "inter");
  fs::create_directories(dir / "identity");
  fs::create_directories(dir / "verify");

  // inter-subject action run exactly at the reference values -> within band
  {
    ExperimentManifest m;
    m.task = Task::Action;
    m.scope = Scope::Inter;
    m.window_seconds = 1.0;
    std::vector<FoldOutcome> folds;
    write_action_metrics_csv(dir / "inter" / "action_metrics.csv", m, folds, 0.9389, 0.9590,
                             0.9180);
  }
  // identification run five points low -> diverges
  {
    ExperimentManifest m;
    m.task = Task::Identity;
    m.window_seconds = 1.0;
    ClassificationMetrics metrics;
    metrics.accuracy = 0.9498;
    metrics.macro_precision = 0.95;
    metrics.macro_recall = 0.95;
    metrics.total = 1000;
    metrics.num_classes = 109;
    metrics.confusion.assign(109 * 109, 0);
    write_identity_metrics_csv(dir / "identity" / "identity_metrics.csv", m, metrics, 109);
  }
  // verification: GI-KU at the reference, GD-KU far off -> one within, one diverges
  {
    ExperimentManifest m;
    m.window_seconds = 1.0;
    ScenarioResult gi;
    gi.scenario = Scenario::GI_KU;
    gi.pooled.scenario = "GI-KU";
    gi.pooled.gesture = "all";
    gi.pooled.eer = 0.0107;
    gi.pooled.threshold_at_eer = 1.0;
    gi.pooled.genuine_pairs = 10;
    gi.pooled.impostor_pairs = 10;
    write_verification_csv(dir / "verify" / "verification_GI-KU.csv", m, gi);
    ScenarioResult gd;
    gd.scenario = Scenario::GD_KU;
    for (int c = 0; c < kActionClassCount; ++c) {
      VerificationReport r;
      r.scenario = "GD-KU";
      r.gesture = action_label(static_cast<ActionClass>(c));
      r.eer = 0.05;
      r.genuine_pairs = r.impostor_pairs = 10;
      gd.per_gesture.push_back(r);
    }
    gd.mean_eer = 0.05;
    write_verification_csv(dir / "verify" / "verification_GD-KU.csv", m, gd);
  }

  auto results = collect_results(dir);
  const fs::path out = dir / "report";
  write_consolidated_report(results, out);

  std::ifstream in(out / "summary.csv");
  EXPECT(in.good(), "summary.csv missing");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto has_row = [&](const std::string& needle) { return text.find(needle) != std::string::npos; };
  EXPECT(has_row("action,inter/full/1.00s,accuracy,93.89,93.89,within"),
         "inter action row not marked within band");
  EXPECT(has_row("93.89") && has_row("95.90") && has_row("91.80"), "reference action values missing");
  EXPECT(has_row("identity") && has_row("94.98,99.98,diverges"),
         "five-point identity shortfall not marked as divergence");
  EXPECT(has_row("verification,GI-KU,eer,1.07,1.07,within"), "GI-KU reference row not within band");
  EXPECT(has_row("verification,GD-KU,eer,5.00,0.39,diverges"),
         "off-reference GD-KU row not marked as divergence");
  EXPECT(text.find("+/-3.0") != std::string::npos, "accuracy tolerance band not documented");
  EXPECT(text.find("+/-2.0") != std::string::npos, "EER tolerance band not documented");
  return kPass;
}

// -------------------------------------------------------------------------
// 8. determinism replay through the CLI

std::string check_determinism() {
  const fs::path base = work_dir() / "determinism";
  fs::remove_all(base);
  fs::create_directories(base);
  auto run = [&](const std::string& args, const fs::path& log) {
    const std::string cmd =
        std::string(EEGMESH_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  const std::string flags = " --dataset-root " + corpus_root().string() +
                            " --window 0.5 --phases 4 --seed 31337 --epochs 1 --batch 16"
                            " --max-subjects 2";
  for (const char* side : {"a", "b"}) {
    const fs::path out = base / side;
    EXPECT(run("ingest" + flags + " --out " + out.string(), base / (std::string("ingest_") + side + ".log")) == 0,
           "ingest failed");
    EXPECT(run("train --task identity" + flags + " --out " + out.string(),
               base / (std::string("train_") + side + ".log")) == 0,
           "train failed");
  }
  const std::string metrics_a = slurp(base / "a" / "identity_metrics.csv");
  EXPECT(!metrics_a.empty(), "metrics file empty");
  EXPECT(metrics_a == slurp(base / "b" / "identity_metrics.csv"),
         "identity_metrics.csv differs between identical reruns");
  EXPECT(slurp(base / "a" / "loss_curve.csv") == slurp(base / "b" / "loss_curve.csv"),
         "loss_curve.csv differs between identical reruns");
  return kPass;
}

struct Criterion {
  const char* name;
  std::function<std::string()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::string only;
  bool list = false;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) only = argv[++i];
    if (arg == "--list") list = true;
  }

  const std::vector<Criterion> criteria = {
      {"preprocessing-properties", check_preprocessing_properties},
      {"gradient-verification", check_gradients},
      {"optimization-sanity", check_optimization_sanity},
      {"eer-oracle-equivalence", check_eer_oracle},
      {"desk-identification", check_desk_identification},
      {"desk-subset-ordering", check_desk_subset_ordering},
      {"reference-report-emitter", check_reference_report},
      {"determinism-replay", check_determinism},
  };

  if (list) {
    for (const auto& c : criteria) std::printf("%s\n", c.name);
    return 0;
  }

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::string(c.name).find(only) == std::string::npos) continue;
    const auto start = std::chrono::steady_clock::now();
    std::string result;
    try {
      result = c.run();
    } catch (const std::exception& e) {
      result = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (result.empty()) {
      std::printf("[PASS] %s (%.1fs)\n", c.name, seconds);
    } else {
      std::printf("[FAIL] %s: %s (%.1fs)\n", c.name, result.c_str(), seconds);
      ++failures;
    }
    std::fflush(stdout);
  }
  return failures;
}
