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

// Command-line driver: `ingest` parses the EDF corpus into the mesh cache,
// `train` runs one of the three protocols, `verify` runs a verification
// scenario, `report` consolidates result CSVs. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 compute failure.

#include <CLI11.hpp>

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eegmesh/cache.hpp"
#include "eegmesh/dataset.hpp"
#include "eegmesh/edf.hpp"
#include "eegmesh/manifest.hpp"
#include "eegmesh/model.hpp"
#include "eegmesh/report.hpp"
#include "eegmesh/train.hpp"
#include "eegmesh/verify.hpp"

namespace fs = std::filesystem;
using namespace eegmesh;

namespace {

/// Rejects concurrent invocations against one output directory.
class LockFile {
 public:
  explicit LockFile(const fs::path& dir) : path_(dir / ".eegmesh.lock") {
    fs::create_directories(dir);
    std::error_code ec;
    if (fs::exists(path_))
      throw OutputLocked("output directory is locked by another invocation: " + path_.string());
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw DataError("cannot create lock file " + path_.string());
    out << "pid " << ::getpid() << "\n";
    locked_ = true;
  }
  ~LockFile() {
    if (locked_) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  fs::path path_;
  bool locked_ = false;
};

struct CommonOpts {
  std::string config, dataset_root, out;
  std::optional<std::string> task, scope, subset, scenario, zscore;
  std::optional<double> window, lr, dropout;
  std::optional<int> phases, epochs, batch, intra_users, max_subjects, holdout_users;
  std::optional<std::int64_t> max_windows;
  std::optional<std::uint64_t> seed;
  std::vector<int> exclude;
  bool exclude_given = false;
  bool keep_all_subjects = false;
  std::vector<double> fractions;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "manifest JSON; flags override its fields");
  cmd->add_option("--dataset-root", o.dataset_root,
                  "corpus root with S###/S###R##.edf (env EEGMESH_DATASET_ROOT as fallback)");
  cmd->add_option("--out", o.out, "output directory (default: results)");
  cmd->add_option("--task", o.task, "action | identity");
  cmd->add_option("--scope", o.scope, "inter | intra (action task)");
  cmd->add_option("--window", o.window, "window length in seconds: 0.25 | 0.5 | 1.0");
  cmd->add_option("--phases", o.phases, "subsampling phase count N (default 4)");
  cmd->add_option("--subset", o.subset, "full | enobio8 | eeglass4 | eeglass3 | eeglass2");
  cmd->add_option("--scenario", o.scenario, "GI-KU | GI-UU | GD-KU | GD-UU");
  cmd->add_option("--seed", o.seed, "experiment seed");
  cmd->add_option("--exclude", o.exclude, "subject ids excluded from action protocols")
      ->expected(-1);
  cmd->add_flag("--keep-all-subjects", o.keep_all_subjects, "clear the default exclusion list");
  cmd->add_option("--zscore", o.zscore, "corpus | per-segment standardization scope");
  cmd->add_option("--epochs", o.epochs, "training epochs (default 80)");
  cmd->add_option("--lr", o.lr, "learning rate (default 1e-4)");
  cmd->add_option("--batch", o.batch, "batch size (default 32)");
  cmd->add_option("--dropout", o.dropout, "dropout rate (default 0.5)");
  cmd->add_option("--intra-users", o.intra_users, "user count for intra-subject runs (default 20)");
  cmd->add_option("--max-subjects", o.max_subjects, "cap the corpus at the first N subjects");
  cmd->add_option("--max-windows-per-user", o.max_windows,
                  "cap verification windows per subject (default 200)");
  cmd->add_option("--holdout-users", o.holdout_users,
                  "held-out subject count for unknown-user scenarios (default 10)");
  cmd->add_option("--fractions", o.fractions, "identification train/val/test fractions")
      ->expected(3);
}

ExperimentManifest make_manifest(const CommonOpts& o, CLI::App* cmd) {
  ExperimentManifest m;
  if (!o.config.empty()) m = load_manifest(o.config);
  if (o.task) m.task = task_by_name(*o.task);
  if (o.scope) m.scope = scope_by_name(*o.scope);
  if (o.window) m.window_seconds = *o.window;
  if (o.phases) m.phase_count = *o.phases;
  if (o.subset) m.subset = subset_by_name(*o.subset).name;
  if (o.scenario) m.scenario = scenario_by_name(*o.scenario);
  if (o.zscore)
    m.zscore = *o.zscore == "per-segment" ? ZscoreMode::PerSegment : ZscoreMode::CorpusFit;
  if (o.seed) m.seed = *o.seed;
  if (cmd->count("--exclude") > 0) m.exclusions = o.exclude;
  if (o.keep_all_subjects) m.exclusions.clear();
  if (o.epochs) m.epochs = *o.epochs;
  if (o.lr) m.learning_rate = *o.lr;
  if (o.batch) m.batch_size = *o.batch;
  if (o.dropout) m.dropout_rate = *o.dropout;
  if (o.intra_users) m.intra_users = *o.intra_users;
  if (o.max_subjects) m.max_subjects = *o.max_subjects;
  if (o.max_windows) m.max_windows_per_user = *o.max_windows;
  if (o.holdout_users) m.holdout_users = *o.holdout_users;
  if (o.fractions.size() == 3) m.fractions = {o.fractions[0], o.fractions[1], o.fractions[2]};
  if (!o.dataset_root.empty()) m.dataset_root = o.dataset_root;
  if (m.dataset_root.empty()) {
    if (const char* env = std::getenv("EEGMESH_DATASET_ROOT")) m.dataset_root = env;
  }
  if (!o.out.empty()) m.output_dir = o.out;
  if (m.output_dir.empty()) m.output_dir = "results";
  return m;
}

TrainConfig train_config(const ExperimentManifest& m, bool verbose = true) {
  TrainConfig cfg;
  cfg.epochs = m.epochs;
  cfg.learning_rate = m.learning_rate;
  cfg.batch_size = m.batch_size;
  cfg.seed = m.seed;
  cfg.window_seconds = m.window_seconds;
  cfg.phase_count = m.phase_count;
  cfg.dropout_rate = m.dropout_rate;
  if (verbose) {
    cfg.on_epoch = [](int epoch, double loss, double val) {
      std::fprintf(stderr, "  epoch %3d  train loss %.4f  val accuracy %.4f\n", epoch, loss, val);
    };
  }
  return cfg;
}

fs::path cache_dir_of(const ExperimentManifest& m) { return fs::path(m.output_dir) / "cache"; }

// -----------------------------------------------------------------------
// ingest

int do_ingest(const ExperimentManifest& manifest) {
  manifest.validate();
  if (manifest.dataset_root.empty())
    throw MissingDataset("no dataset root given (use --dataset-root or EEGMESH_DATASET_ROOT)");
  auto files = scan_corpus(manifest.dataset_root);
  if (files.empty())
    throw MissingDataset("no S###/S###R##.edf files under " + manifest.dataset_root);

  LockFile lock(manifest.output_dir);
  const fs::path cache_dir = cache_dir_of(manifest);
  fs::create_directories(cache_dir);
  const auto& layout = ElectrodeLayout::standard_10_10();
  PreprocessOptions opt;
  opt.window_seconds = manifest.window_seconds;
  opt.phase_count = manifest.phase_count;
  opt.subset = subset_config(manifest.subset);
  opt.zscore = manifest.zscore;

  std::map<int, int> runs_per_subject;
  std::map<int, std::size_t> meshes_per_subject;
  int built = 0, hits = 0, skipped_rate = 0;
  for (const auto& f : files) {
    if (!is_admissible_run(f.run_id)) continue;
    const auto key = cache_key_hash(fnv1a_file(f.path), manifest.window_samples(),
                                    manifest.phase_count, manifest.subset, manifest.zscore);
    const fs::path target = cache_dir / cache_file_name(f.subject_id, f.run_id,
                                                        manifest.window_samples(),
                                                        manifest.phase_count, manifest.subset);
    if (auto stored = cache_source_hash(target); stored && *stored == key) {
      ++hits;
      ++runs_per_subject[f.subject_id];
      continue;
    }
    Recording rec;
    try {
      rec = parse_edf_file(f.path);
    } catch (const Error& e) {
      throw DataError(f.path.string() + ": " + e.what());
    }
    if (rec.sample_rate != 160.0) {
      std::fprintf(stderr, "warning: %s sampled at %.0f Hz, skipped\n", f.path.string().c_str(),
                   rec.sample_rate);
      ++skipped_rate;
      continue;
    }
    MeshCache cache;
    cache.subject_id = f.subject_id;
    cache.run_id = f.run_id;
    cache.window_samples = manifest.window_samples();
    cache.phase_count = manifest.phase_count;
    cache.subset = manifest.subset;
    cache.zscore = manifest.zscore;
    cache.time_steps = manifest.window_samples() / manifest.phase_count;
    cache.source_hash = key;
    cache.meshes = preprocess_recording(rec, opt, layout);
    write_mesh_cache(cache, target);
    ++built;
    ++runs_per_subject[f.subject_id];
    meshes_per_subject[f.subject_id] += cache.meshes.size();
  }

  std::printf("subjects discovered: %zu\n", runs_per_subject.size());
  for (const auto& [subject, runs] : runs_per_subject)
    std::printf("  S%03d: %d admissible runs, %zu new meshes\n", subject, runs,
                meshes_per_subject[subject]);
  std::printf("cache files built: %d, cache hits: %d, skipped (sample rate): %d\n", built, hits,
              skipped_rate);
  for (int e : manifest.exclusions)
    if (runs_per_subject.count(e))
      std::printf("note: subject S%03d is on the action-protocol exclusion list\n", e);
  return 0;
}

// -----------------------------------------------------------------------
// cache loading shared by train/verify

struct CachedCorpus {
  std::vector<MeshSequence> pool;
  std::vector<int> subjects;
};

std::vector<int> cached_subjects(const fs::path& cache_dir, const ExperimentManifest& m) {
  std::set<int> subjects;
  if (!fs::exists(cache_dir)) return {};
  for (const auto& entry : fs::directory_iterator(cache_dir)) {
    if (entry.path().extension() != ".emc") continue;
    int subject = 0, run = 0;
    long long window = 0;
    int phases = 0;
    char subset[32] = {0};
    if (std::sscanf(entry.path().filename().string().c_str(), "S%dR%d_w%lld_n%d_%31[^.].emc",
                    &subject, &run, &window, &phases, subset) == 5 &&
        window == m.window_samples() && phases == m.phase_count &&
        std::string(subset) == subset_label(m.subset))
      subjects.insert(subject);
  }
  return {subjects.begin(), subjects.end()};
}

CachedCorpus load_cached(const ExperimentManifest& m, const std::vector<int>& subjects) {
  const fs::path cache_dir = cache_dir_of(m);
  CachedCorpus corpus;
  corpus.subjects = subjects;
  for (int subject : subjects) {
    for (int run : {2, 4, 6, 8, 10, 12, 14}) {
      const fs::path path = cache_dir / cache_file_name(subject, run, m.window_samples(),
                                                        m.phase_count, m.subset);
      if (!fs::exists(path)) continue;
      auto cache = read_mesh_cache(path);
      for (auto& mesh : cache.meshes) corpus.pool.push_back(std::move(mesh));
    }
  }
  if (corpus.pool.empty())
    throw MissingDataset("no cached meshes for this configuration; run `ingest` first");
  return corpus;
}

std::vector<int> scope_subjects(const ExperimentManifest& m, std::vector<int> all, bool apply_exclusions) {
  if (all.empty()) throw MissingDataset("cache is empty; run `ingest` first");
  if (apply_exclusions) {
    // Default exclusions are intersected with the corpus (a reduced corpus
    // simply lacks them); explicitly passed ids must exist.
    std::vector<int> effective;
    for (int e : m.exclusions)
      if (std::find(all.begin(), all.end(), e) != all.end()) effective.push_back(e);
    all = filter_subjects(all, effective);
  }
  if (m.max_subjects > 0 && static_cast<int>(all.size()) > m.max_subjects)
    all.resize(static_cast<std::size_t>(m.max_subjects));
  return all;
}

// -----------------------------------------------------------------------
// train

int do_train(const ExperimentManifest& manifest) {
  manifest.validate();
  LockFile lock(manifest.output_dir);
  const fs::path out(manifest.output_dir);
  fs::create_directories(out);
  const auto& layout = ElectrodeLayout::standard_10_10();
  const auto cells = mesh_cells(layout, layout.electrodes());

  auto all = cached_subjects(cache_dir_of(manifest), manifest);
  TrainConfig cfg = train_config(manifest);

  if (manifest.task == Task::Action && manifest.scope == Scope::Inter) {
    auto subjects = scope_subjects(manifest, all, /*apply_exclusions=*/true);
    auto corpus = load_cached(manifest, subjects);
    std::printf("inter-subject action recognition: %zu subjects, %zu windows\n", subjects.size(),
                corpus.pool.size());
    auto result = run_inter_subject(corpus.pool, cells, cfg, 10, manifest.zscore);
    write_action_metrics_csv(out / "action_metrics.csv", manifest, result.folds,
                             result.mean_accuracy, result.mean_precision, result.mean_recall);
    std::printf("mean accuracy %.4f precision %.4f recall %.4f\n", result.mean_accuracy,
                result.mean_precision, result.mean_recall);
  } else if (manifest.task == Task::Action && manifest.scope == Scope::Intra) {
    auto subjects = scope_subjects(manifest, all, /*apply_exclusions=*/true);
    if (static_cast<int>(subjects.size()) > manifest.intra_users)
      subjects.resize(static_cast<std::size_t>(manifest.intra_users));
    auto corpus = load_cached(manifest, subjects);
    std::printf("intra-subject action recognition: %zu users, %zu windows\n", subjects.size(),
                corpus.pool.size());
    auto result = run_intra_subject(corpus.pool, subjects, cells, cfg, manifest.zscore);
    for (const auto& u : result.users)
      if (u.duplicate_windows > 0)
        std::fprintf(stderr, "leakage guard: user %d has %lld duplicate windows across the split\n",
                     u.subject_id, static_cast<long long>(u.duplicate_windows));
    write_intra_metrics_csv(out / "intra_metrics.csv", manifest, result);
    std::printf("mean accuracy %.4f over %zu users\n", result.mean_accuracy, result.users.size());
  } else {
    // identification spans every cached subject; the exclusion list applies
    // to action protocols only
    auto subjects = scope_subjects(manifest, all, /*apply_exclusions=*/false);
    auto corpus = load_cached(manifest, subjects);
    std::printf("user identification: %zu subjects, %zu windows\n", subjects.size(),
                corpus.pool.size());
    const auto t_steps = corpus.pool.front().time_steps;
    auto model = build_table1_model<float>(t_steps, static_cast<std::int64_t>(subjects.size()),
                                           ModelKind::UserIdentification, manifest.dropout_rate,
                                           manifest.seed);
    auto result = run_identification(model, corpus.pool, cells, manifest.fractions, cfg,
                                     manifest.zscore);
    write_identity_metrics_csv(out / "identity_metrics.csv", manifest, result.test_metrics,
                               static_cast<int>(subjects.size()));
    write_loss_curve_csv(out / "loss_curve.csv", result.curve.curve);
    save_checkpoint(model, out / "identification.ckpt");
    save_standardizer(result.standardizer, out / "identification.stats");
    std::printf("test accuracy %.4f (best val %.4f at epoch %d)\n", result.test_metrics.accuracy,
                result.curve.best_val_accuracy, result.curve.best_epoch);
  }
  save_manifest(manifest, out / "manifest.json");
  return 0;
}

// -----------------------------------------------------------------------
// verify

int do_verify(const ExperimentManifest& manifest) {
  manifest.validate();
  if (!manifest.scenario) throw InvalidManifest("verify needs --scenario");
  LockFile lock(manifest.output_dir);
  const fs::path out(manifest.output_dir);
  fs::create_directories(out);
  const auto& layout = ElectrodeLayout::standard_10_10();
  const auto cells = mesh_cells(layout, layout.electrodes());

  auto all = cached_subjects(cache_dir_of(manifest), manifest);
  if (all.empty())
    throw MissingCheckpoint("no identification model trainable: cache is empty; run `ingest`");
  auto subjects = scope_subjects(manifest, all, /*apply_exclusions=*/false);
  auto corpus = load_cached(manifest, subjects);

  ScenarioConfig cfg;
  cfg.train = train_config(manifest);
  cfg.fractions = manifest.fractions;
  cfg.max_windows_per_user = manifest.max_windows_per_user;
  cfg.holdout_users = manifest.holdout_users;
  cfg.zscore = manifest.zscore;
  const Scenario scenario = *manifest.scenario;
  std::printf("scenario %s over %zu subjects, %zu windows\n", scenario_label(scenario),
              subjects.size(), corpus.pool.size());

  auto result = run_scenario(scenario, corpus.pool, cells, cfg);
  if (scenario == Scenario::GI_UU || scenario == Scenario::GD_UU) {
    std::printf("disjointness: %zu training subjects vs %zu verification subjects, overlap 0\n",
                result.train_subjects.size(), result.verify_subjects.size());
  }
  const std::string tag = scenario_label(scenario);
  write_verification_csv(out / ("verification_" + tag + ".csv"), manifest, result);
  if (result.per_gesture.empty()) {
    write_roc_csv(out / ("roc_" + tag + ".csv"), result.pooled);
    std::printf("%s EER %.4f (threshold %.4f, rank-1 %.4f)\n", tag.c_str(), result.pooled.eer,
                result.pooled.threshold_at_eer, result.pooled.rank1_rate);
  } else {
    for (const auto& r : result.per_gesture) {
      write_roc_csv(out / ("roc_" + tag + "_" + r.gesture + ".csv"), r);
      std::printf("%s gesture %-10s EER %.4f\n", tag.c_str(), r.gesture.c_str(), r.eer);
    }
    std::printf("%s mean EER %.4f\n", tag.c_str(), result.mean_eer);
  }
  save_manifest(manifest, out / ("manifest_verify_" + tag + ".json"));
  return 0;
}

// -----------------------------------------------------------------------
// report

int do_report(const std::string& results_dir, const std::string& out_dir) {
  auto results = collect_results(results_dir.empty() ? "results" : results_dir);
  const fs::path out = out_dir.empty() ? fs::path(results_dir) / "report" : fs::path(out_dir);
  write_consolidated_report(results, out);
  std::printf("report written to %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG mesh toolkit: imagined-action recognition, user identification and verification"};
  app.require_subcommand(1);

  CommonOpts ingest_opts, train_opts, verify_opts;
  auto* ingest = app.add_subcommand("ingest", "parse the EDF corpus into the mesh cache");
  add_common(ingest, ingest_opts);
  auto* train = app.add_subcommand("train", "train and evaluate one protocol");
  add_common(train, train_opts);
  auto* verify = app.add_subcommand("verify", "run a verification scenario");
  add_common(verify, verify_opts);

  std::string report_results, report_out;
  auto* report = app.add_subcommand("report", "consolidate result CSVs into summary tables");
  report->add_option("--results", report_results, "results directory (default: results)");
  report->add_option("--out", report_out, "report output directory");

  try {
    app.parse(argc, argv);
    if (ingest->parsed()) return do_ingest(make_manifest(ingest_opts, ingest));
    if (train->parsed()) return do_train(make_manifest(train_opts, train));
    if (verify->parsed()) return do_verify(make_manifest(verify_opts, verify));
    if (report->parsed()) return do_report(report_results, report_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
