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

// Result files and the consolidated report. Metric CSVs are written with
// fixed float formatting and no timestamps, so a rerun with the same
// manifest and seed is byte-identical. The consolidated report compares
// full-scale runs against the published reference results with a documented
// tolerance band (3 accuracy points, 2 EER points); divergence is reported
// in the table, never asserted.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegmesh/errors.hpp"
#include "eegmesh/manifest.hpp"
#include "eegmesh/train.hpp"
#include "eegmesh/verify.hpp"

namespace eegmesh {

// Reference results for the full-corpus protocols (percentages).
struct ReferenceTargets {
  // inter-subject action recognition, 103 users, 1 s windows
  double inter_accuracy = 93.89, inter_precision = 95.90, inter_recall = 91.80;
  // intra-subject action recognition, 20 users, 0.25 s windows
  double intra_accuracy = 98.43;
  // user identification, 109 users, 1 s windows
  double identity_accuracy = 99.98;
  // verification EER per scenario, 1 s windows
  double eer_gi_ku = 1.07, eer_gi_uu = 6.16, eer_gd_ku = 0.39, eer_gd_uu = 3.88;
  // electrode-subset runs, 0.5 s windows
  std::map<std::string, double> subset_action = {{"full", 93.89},
                                                 {"enobio8", 79.14},
                                                 {"eeglass4", 78.76},
                                                 {"eeglass3", 71.99},
                                                 {"eeglass2", 55.66}};
  std::map<std::string, double> subset_identity = {{"full", 99.98},
                                                   {"enobio8", 44.55},
                                                   {"eeglass4", 59.15},
                                                   {"eeglass3", 46.47},
                                                   {"eeglass2", 35.13}};
  double accuracy_band = 3.0;  // percentage points
  double eer_band = 2.0;
};

inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ",";
      out_ << cells[i];
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

/// Columns follow the published table order: accuracy, precision, recall.
inline void write_action_metrics_csv(const std::filesystem::path& path,
                                     const ExperimentManifest& manifest,
                                     const std::vector<FoldOutcome>& folds, double mean_accuracy,
                                     double mean_precision, double mean_recall) {
  CsvWriter csv(path);
  csv.row({"task", "scope", "window_s", "phases", "subset", "seed", "fold", "accuracy", "precision",
           "recall"});
  auto meta = [&](const std::string& fold) {
    return std::vector<std::string>{task_label(manifest.task), scope_label(manifest.scope),
                                    fmt(manifest.window_seconds, 2), std::to_string(manifest.phase_count),
                                    subset_label(manifest.subset), std::to_string(manifest.seed), fold};
  };
  for (const auto& f : folds) {
    auto row = meta(std::to_string(f.fold));
    row.push_back(fmt(f.metrics.accuracy));
    row.push_back(fmt(f.metrics.macro_precision));
    row.push_back(fmt(f.metrics.macro_recall));
    csv.row(row);
  }
  auto row = meta("mean");
  row.push_back(fmt(mean_accuracy));
  row.push_back(fmt(mean_precision));
  row.push_back(fmt(mean_recall));
  csv.row(row);
}

inline void write_intra_metrics_csv(const std::filesystem::path& path,
                                    const ExperimentManifest& manifest,
                                    const IntraSubjectResult& result) {
  CsvWriter csv(path);
  csv.row({"task", "scope", "window_s", "phases", "subset", "seed", "subject", "accuracy",
           "duplicate_windows"});
  for (const auto& u : result.users) {
    csv.row({task_label(manifest.task), scope_label(manifest.scope), fmt(manifest.window_seconds, 2),
             std::to_string(manifest.phase_count), subset_label(manifest.subset),
             std::to_string(manifest.seed), std::to_string(u.subject_id), fmt(u.metrics.accuracy),
             std::to_string(u.duplicate_windows)});
  }
  csv.row({task_label(manifest.task), scope_label(manifest.scope), fmt(manifest.window_seconds, 2),
           std::to_string(manifest.phase_count), subset_label(manifest.subset),
           std::to_string(manifest.seed), "mean", fmt(result.mean_accuracy), "0"});
}

inline void write_identity_metrics_csv(const std::filesystem::path& path,
                                       const ExperimentManifest& manifest,
                                       const ClassificationMetrics& metrics, int subjects) {
  CsvWriter csv(path);
  csv.row({"task", "window_s", "phases", "subset", "seed", "users", "accuracy", "precision",
           "recall"});
  csv.row({task_label(manifest.task), fmt(manifest.window_seconds, 2),
           std::to_string(manifest.phase_count), subset_label(manifest.subset),
           std::to_string(manifest.seed), std::to_string(subjects), fmt(metrics.accuracy),
           fmt(metrics.macro_precision), fmt(metrics.macro_recall)});
}

inline void write_loss_curve_csv(const std::filesystem::path& path,
                                 const std::vector<EpochStats>& curve) {
  CsvWriter csv(path);
  csv.row({"epoch", "train_loss", "val_accuracy"});
  for (const auto& e : curve)
    csv.row({std::to_string(e.epoch), fmt(e.train_loss), fmt(e.val_accuracy)});
}

inline void write_verification_csv(const std::filesystem::path& path,
                                   const ExperimentManifest& manifest,
                                   const ScenarioResult& result) {
  CsvWriter csv(path);
  csv.row({"scenario", "gesture", "eer", "threshold", "genuine_pairs", "impostor_pairs",
           "rank1_rate", "window_s", "subset", "seed"});
  auto emit = [&](const VerificationReport& r) {
    csv.row({r.scenario, r.gesture, fmt(r.eer), fmt(r.threshold_at_eer),
             std::to_string(r.genuine_pairs), std::to_string(r.impostor_pairs), fmt(r.rank1_rate),
             fmt(manifest.window_seconds, 2), subset_label(manifest.subset),
             std::to_string(manifest.seed)});
  };
  if (result.per_gesture.empty()) {
    emit(result.pooled);
  } else {
    for (const auto& r : result.per_gesture) emit(r);
    csv.row({scenario_label(result.scenario), "mean", fmt(result.mean_eer), "", "", "", "",
             fmt(manifest.window_seconds, 2), subset_label(manifest.subset),
             std::to_string(manifest.seed)});
  }
}

inline void write_roc_csv(const std::filesystem::path& path, const VerificationReport& report) {
  CsvWriter csv(path);
  csv.row({"threshold", "far", "frr"});
  for (const auto& p : report.roc) csv.row({fmt(p.threshold), fmt(p.far), fmt(p.frr)});
}

// ---------------------------------------------------------------------------
// Consolidated report over a results directory

struct CollectedResults {
  // last row of each metrics file, keyed by (task, scope, subset)
  struct ActionRow {
    std::string scope, subset;
    double window_s = 0, accuracy = 0, precision = 0, recall = 0;
  };
  struct IdentityRow {
    std::string subset;
    double window_s = 0, accuracy = 0;
    int users = 0;
  };
  struct VerifyRow {
    std::string scenario, gesture;
    double eer = 0;
  };
  std::vector<ActionRow> action;
  std::vector<IdentityRow> identity;
  std::vector<VerifyRow> verification;
};

namespace report_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(split_csv_line(line));
  }
  return rows;
}

}  // namespace report_detail

/// Scans an output directory tree for metric CSVs written by the toolkit.
inline CollectedResults collect_results(const std::filesystem::path& results_dir) {
  namespace fs = std::filesystem;
  using namespace report_detail;
  CollectedResults out;
  if (!fs::exists(results_dir)) throw NoResults("results directory does not exist");
  for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name == "action_metrics.csv") {
      auto rows = read_csv(entry.path());
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 10 || r[6] != "mean") continue;
        out.action.push_back({r[1], r[4], std::stod(r[2]), std::stod(r[7]) * 100.0,
                              std::stod(r[8]) * 100.0, std::stod(r[9]) * 100.0});
      }
    } else if (name == "intra_metrics.csv") {
      auto rows = read_csv(entry.path());
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 8 || r[6] != "mean") continue;
        out.action.push_back({r[1], r[4], std::stod(r[2]), std::stod(r[7]) * 100.0, 0, 0});
      }
    } else if (name == "identity_metrics.csv") {
      auto rows = read_csv(entry.path());
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 9) continue;
        out.identity.push_back(
            {r[3], std::stod(r[1]), std::stod(r[6]) * 100.0, std::stoi(r[5])});
      }
    } else if (name.rfind("verification_", 0) == 0 && entry.path().extension() == ".csv") {
      auto rows = read_csv(entry.path());
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 3 || r[2].empty()) continue;
        out.verification.push_back({r[0], r[1], std::stod(r[2]) * 100.0});
      }
    }
  }
  if (out.action.empty() && out.identity.empty() && out.verification.empty())
    throw NoResults("no completed experiments under " + results_dir.string());
  return out;
}

inline std::string band_verdict(double measured, double reference, double band) {
  const double delta = measured - reference;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s (delta %+.2f, band +/-%.1f)",
                std::abs(delta) <= band ? "within" : "diverges", delta, band);
  return buf;
}

/// Emits the consolidated tables (CSV and markdown): per-task results plus
/// the reference comparison and the electrode-subset ablation.
inline void write_consolidated_report(const CollectedResults& results,
                                      const std::filesystem::path& out_dir,
                                      const ReferenceTargets& ref = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    CsvWriter csv(out_dir / "summary.csv");
    csv.row({"experiment", "configuration", "metric", "value_pct", "reference_pct", "verdict"});
    for (const auto& a : results.action) {
      const bool inter = a.scope == "inter";
      const bool full = a.subset == "full";
      std::string config = a.scope + "/" + a.subset + "/" + fmt(a.window_s, 2) + "s";
      if (inter && full && std::abs(a.window_s - 1.0) < 1e-9) {
        csv.row({"action", config, "accuracy", fmt(a.accuracy, 2), fmt(ref.inter_accuracy, 2),
                 band_verdict(a.accuracy, ref.inter_accuracy, ref.accuracy_band)});
        csv.row({"action", config, "precision", fmt(a.precision, 2), fmt(ref.inter_precision, 2),
                 band_verdict(a.precision, ref.inter_precision, ref.accuracy_band)});
        csv.row({"action", config, "recall", fmt(a.recall, 2), fmt(ref.inter_recall, 2),
                 band_verdict(a.recall, ref.inter_recall, ref.accuracy_band)});
      } else if (!inter && full) {
        csv.row({"action", config, "accuracy", fmt(a.accuracy, 2), fmt(ref.intra_accuracy, 2),
                 band_verdict(a.accuracy, ref.intra_accuracy, ref.accuracy_band)});
      } else if (auto it = ref.subset_action.find(a.subset);
                 inter && it != ref.subset_action.end() && std::abs(a.window_s - 0.5) < 1e-9) {
        csv.row({"action", config, "accuracy", fmt(a.accuracy, 2), fmt(it->second, 2),
                 band_verdict(a.accuracy, it->second, ref.accuracy_band)});
      } else {
        csv.row({"action", config, "accuracy", fmt(a.accuracy, 2), "", "n/a (reduced run)"});
      }
    }
    for (const auto& r : results.identity) {
      std::string config = std::string(r.subset) + "/" + fmt(r.window_s, 2) + "s/" +
                           std::to_string(r.users) + "u";
      if (r.subset == "full" && r.users >= 103 && std::abs(r.window_s - 1.0) < 1e-9) {
        csv.row({"identity", config, "accuracy", fmt(r.accuracy, 2), fmt(ref.identity_accuracy, 2),
                 band_verdict(r.accuracy, ref.identity_accuracy, ref.accuracy_band)});
      } else if (auto it = ref.subset_identity.find(r.subset);
                 it != ref.subset_identity.end() && std::abs(r.window_s - 0.5) < 1e-9 &&
                 r.users >= 103) {
        csv.row({"identity", config, "accuracy", fmt(r.accuracy, 2), fmt(it->second, 2),
                 band_verdict(r.accuracy, it->second, ref.accuracy_band)});
      } else {
        csv.row({"identity", config, "accuracy", fmt(r.accuracy, 2), "", "n/a (reduced run)"});
      }
    }
    for (const auto& v : results.verification) {
      if (v.gesture != "all" && v.gesture != "mean") continue;
      double target = -1;
      if (v.scenario == "GI-KU") target = ref.eer_gi_ku;
      if (v.scenario == "GI-UU") target = ref.eer_gi_uu;
      if (v.scenario == "GD-KU") target = ref.eer_gd_ku;
      if (v.scenario == "GD-UU") target = ref.eer_gd_uu;
      if (target >= 0) {
        csv.row({"verification", v.scenario, "eer", fmt(v.eer, 2), fmt(target, 2),
                 band_verdict(v.eer, target, ref.eer_band)});
      }
    }
  }

  // subset ablation table: rows = configurations, columns = task accuracies
  {
    CsvWriter csv(out_dir / "subset_ablation.csv");
    csv.row({"configuration", "action_accuracy_pct", "identity_accuracy_pct"});
    for (const char* subset : {"full", "enobio8", "eeglass4", "eeglass3", "eeglass2"}) {
      std::string action = "-", identity = "-";
      for (const auto& a : results.action)
        if (a.subset == subset && a.scope == "inter") action = fmt(a.accuracy, 2);
      for (const auto& r : results.identity)
        if (r.subset == subset) identity = fmt(r.accuracy, 2);
      if (action != "-" || identity != "-")
        csv.row({subset, action, identity});
    }
  }

  // markdown mirror
  {
    std::ofstream md(out_dir / "report.md", std::ios::trunc);
    if (!md) throw DataError("cannot write report.md");
    md << "# Experiment report\n\n";
    md << "Reference comparison uses a tolerance band of +/-" << fmt(ref.accuracy_band, 1)
       << " accuracy points and +/-" << fmt(ref.eer_band, 1)
       << " EER points; rows outside the band are marked `diverges` (reported, not asserted).\n\n";
    md << "## Action recognition\n\n";
    md << "| Scope | Subset | Window (s) | Accuracy % | Precision % | Recall % |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const auto& a : results.action)
      md << "| " << a.scope << " | " << a.subset << " | " << fmt(a.window_s, 2) << " | "
         << fmt(a.accuracy, 2) << " | " << (a.precision > 0 ? fmt(a.precision, 2) : std::string("-"))
         << " | " << (a.recall > 0 ? fmt(a.recall, 2) : std::string("-")) << " |\n";
    md << "\n## User identification\n\n";
    md << "| Subset | Window (s) | Users | Accuracy % |\n|---|---|---|---|\n";
    for (const auto& r : results.identity)
      md << "| " << r.subset << " | " << fmt(r.window_s, 2) << " | " << r.users << " | "
         << fmt(r.accuracy, 2) << " |\n";
    md << "\n## User verification\n\n";
    md << "| Scenario | Gesture | EER % |\n|---|---|---|\n";
    for (const auto& v : results.verification)
      md << "| " << v.scenario << " | " << v.gesture << " | " << fmt(v.eer, 2) << " |\n";
  }
}

}  // namespace eegmesh
