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

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegmesh/dataset.hpp"
#include "eegmesh/errors.hpp"
#include "eegmesh/layout.hpp"
#include "eegmesh/preprocess.hpp"
#include "eegmesh/verify.hpp"

namespace eegmesh {

enum class Task : std::uint8_t { Action = 0, Identity = 1 };
enum class Scope : std::uint8_t { Inter = 0, Intra = 1 };

/// One reproducible experiment: what to run, on which data, with which seed.
/// Serializes to JSON for --config files and for the copy written next to
/// every result.
struct ExperimentManifest {
  Task task = Task::Action;
  Scope scope = Scope::Inter;
  double window_seconds = 1.0;
  int phase_count = 4;
  SubsetName subset = SubsetName::Full;
  std::vector<int> exclusions = default_excluded_subjects();
  std::array<double, 3> fractions{0.75, 0.15, 0.10};
  std::uint64_t seed = 0;
  std::optional<Scenario> scenario;
  ZscoreMode zscore = ZscoreMode::CorpusFit;
  int epochs = 80;
  double learning_rate = 1e-4;
  int batch_size = 32;
  double dropout_rate = 0.5;
  int intra_users = 20;          // first N subjects after exclusions
  int max_subjects = 0;          // 0 = no cap; reduced runs cap the corpus
  int holdout_users = 10;        // unknown-user scenarios: verification-only subjects
  std::int64_t max_windows_per_user = 200;  // verification matrix cap
  std::string dataset_root;
  std::string output_dir;

  std::int64_t window_samples(double sample_rate = 160.0) const {
    return static_cast<std::int64_t>(std::llround(window_seconds * sample_rate));
  }

  void validate() const {
    const double allowed[] = {0.25, 0.5, 1.0};
    bool ok = false;
    for (double w : allowed) ok = ok || std::abs(window_seconds - w) < 1e-9;
    if (!ok) throw InvalidManifest("window_seconds must be one of 0.25, 0.5, 1.0");
    if (phase_count < 1) throw InvalidManifest("phase_count must be >= 1");
    if (window_samples() % phase_count != 0)
      throw InvalidManifest("window samples (" + std::to_string(window_samples()) +
                            ") not divisible by phase count " + std::to_string(phase_count));
    if (fractions[0] <= 0) throw InvalidManifest("training fraction must be positive");
    if (fractions[0] + fractions[1] + fractions[2] <= 0)
      throw InvalidManifest("split fractions must sum to a positive value");
    if (epochs < 1 || batch_size < 2) throw InvalidManifest("epochs >= 1 and batch_size >= 2 required");
    if (learning_rate <= 0) throw InvalidManifest("learning rate must be positive");
    if (dropout_rate < 0 || dropout_rate >= 1) throw InvalidManifest("dropout rate must lie in [0, 1)");
  }
};

inline const char* task_label(Task t) { return t == Task::Action ? "action" : "identity"; }
inline const char* scope_label(Scope s) { return s == Scope::Inter ? "inter" : "intra"; }

inline Task task_by_name(std::string_view text) {
  if (text == "action") return Task::Action;
  if (text == "identity") return Task::Identity;
  throw InvalidManifest("unknown task: " + std::string(text) + " (expected action|identity)");
}

inline Scope scope_by_name(std::string_view text) {
  if (text == "inter") return Scope::Inter;
  if (text == "intra") return Scope::Intra;
  throw InvalidManifest("unknown scope: " + std::string(text) + " (expected inter|intra)");
}

inline nlohmann::json manifest_to_json(const ExperimentManifest& m) {
  nlohmann::json j;
  j["task"] = task_label(m.task);
  j["scope"] = scope_label(m.scope);
  j["window_seconds"] = m.window_seconds;
  j["phase_count"] = m.phase_count;
  j["subset"] = subset_label(m.subset);
  j["exclusions"] = m.exclusions;
  j["fractions"] = m.fractions;
  j["seed"] = m.seed;
  if (m.scenario) j["scenario"] = scenario_label(*m.scenario);
  j["zscore"] = m.zscore == ZscoreMode::CorpusFit ? "corpus" : "per-segment";
  j["epochs"] = m.epochs;
  j["learning_rate"] = m.learning_rate;
  j["batch_size"] = m.batch_size;
  j["dropout_rate"] = m.dropout_rate;
  j["intra_users"] = m.intra_users;
  j["max_subjects"] = m.max_subjects;
  j["holdout_users"] = m.holdout_users;
  j["max_windows_per_user"] = m.max_windows_per_user;
  j["dataset_root"] = m.dataset_root;
  j["output_dir"] = m.output_dir;
  return j;
}

inline ExperimentManifest manifest_from_json(const nlohmann::json& j) {
  ExperimentManifest m;
  try {
    if (j.contains("task")) m.task = task_by_name(j.at("task").get<std::string>());
    if (j.contains("scope")) m.scope = scope_by_name(j.at("scope").get<std::string>());
    if (j.contains("window_seconds")) m.window_seconds = j.at("window_seconds").get<double>();
    if (j.contains("phase_count")) m.phase_count = j.at("phase_count").get<int>();
    if (j.contains("subset")) m.subset = subset_by_name(j.at("subset").get<std::string>()).name;
    if (j.contains("exclusions")) m.exclusions = j.at("exclusions").get<std::vector<int>>();
    if (j.contains("fractions")) m.fractions = j.at("fractions").get<std::array<double, 3>>();
    if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("scenario")) m.scenario = scenario_by_name(j.at("scenario").get<std::string>());
    if (j.contains("zscore"))
      m.zscore = j.at("zscore").get<std::string>() == "per-segment" ? ZscoreMode::PerSegment
                                                                    : ZscoreMode::CorpusFit;
    if (j.contains("epochs")) m.epochs = j.at("epochs").get<int>();
    if (j.contains("learning_rate")) m.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) m.batch_size = j.at("batch_size").get<int>();
    if (j.contains("dropout_rate")) m.dropout_rate = j.at("dropout_rate").get<double>();
    if (j.contains("intra_users")) m.intra_users = j.at("intra_users").get<int>();
    if (j.contains("max_subjects")) m.max_subjects = j.at("max_subjects").get<int>();
    if (j.contains("holdout_users")) m.holdout_users = j.at("holdout_users").get<int>();
    if (j.contains("max_windows_per_user"))
      m.max_windows_per_user = j.at("max_windows_per_user").get<std::int64_t>();
    if (j.contains("dataset_root")) m.dataset_root = j.at("dataset_root").get<std::string>();
    if (j.contains("output_dir")) m.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidManifest(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

inline ExperimentManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidManifest("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidManifest(std::string("manifest is not valid JSON: ") + e.what());
  }
  return manifest_from_json(j);
}

inline void save_manifest(const ExperimentManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << manifest_to_json(m).dump(2) << "\n";
}

}  // namespace eegmesh
