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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eegmesh/edf.hpp"
#include "eegmesh/errors.hpp"

namespace eegmesh {

/// The five classes of interest. Rest comes exclusively from the
/// closed-eyes baseline run; within-run rest periods are never used.
enum class ActionClass : std::uint8_t {
  RestClosedEyes = 0,
  ImaginedLeftFist = 1,
  ImaginedRightFist = 2,
  ImaginedBothFists = 3,
  ImaginedBothFeet = 4,
};

inline constexpr int kActionClassCount = 5;

inline const char* action_label(ActionClass c) {
  switch (c) {
    case ActionClass::RestClosedEyes: return "rest";
    case ActionClass::ImaginedLeftFist: return "left_fist";
    case ActionClass::ImaginedRightFist: return "right_fist";
    case ActionClass::ImaginedBothFists: return "both_fists";
    case ActionClass::ImaginedBothFeet: return "both_feet";
  }
  return "?";
}

/// Action trials are capped at 4 seconds; the corpus annotates slightly
/// longer cue intervals but the action itself spans 4 s.
inline constexpr double kActionTrialSeconds = 4.0;

struct LabeledTrial {
  int subject_id = 0;
  int run_id = 0;
  ActionClass action = ActionClass::RestClosedEyes;
  double onset_s = 0.0;
  std::uint16_t trial_index = 0;  // position within the run's emitted trials
  std::int64_t n_samples = 0;
  std::vector<float> signal;  // [n_samples x 64]

  float sample(std::int64_t i, std::int64_t ch) const {
    return signal[static_cast<std::size_t>(i * kElectrodeCount + ch)];
  }
};

/// Maps (run, annotation code) to an action class. Imagined-task runs are
/// 4, 8, 12 (left/right fist) and 6, 10, 14 (both fists/feet); run 2 is the
/// closed-eyes baseline. Real-movement runs, the eyes-open baseline, and
/// within-run rest all map to nullopt.
inline std::optional<ActionClass> derive_class(int run_id, std::string_view code) {
  if (run_id < 1 || run_id > 14) throw InvalidRun("run id outside 1..14: " + std::to_string(run_id));
  if (run_id == 2) return ActionClass::RestClosedEyes;
  const bool fists_run = (run_id == 4 || run_id == 8 || run_id == 12);
  const bool both_run = (run_id == 6 || run_id == 10 || run_id == 14);
  if (code == "T1") {
    if (fists_run) return ActionClass::ImaginedLeftFist;
    if (both_run) return ActionClass::ImaginedBothFists;
  } else if (code == "T2") {
    if (fists_run) return ActionClass::ImaginedRightFist;
    if (both_run) return ActionClass::ImaginedBothFeet;
  }
  return std::nullopt;
}

inline bool is_admissible_run(int run_id) {
  return run_id == 2 || run_id == 4 || run_id == 6 || run_id == 8 || run_id == 10 ||
         run_id == 12 || run_id == 14;
}

/// Slices a recording into labeled trials. The baseline run yields one trial
/// spanning the whole recording; task runs yield one trial per T1/T2 event,
/// clipped to the event duration and capped at 4 s.
inline std::vector<LabeledTrial> extract_trials(const Recording& rec) {
  std::vector<LabeledTrial> trials;
  if (!is_admissible_run(rec.run_id)) return trials;

  auto slice = [&](double onset_s, std::int64_t start, std::int64_t len, ActionClass cls) {
    LabeledTrial t;
    t.subject_id = rec.subject_id;
    t.run_id = rec.run_id;
    t.action = cls;
    t.onset_s = onset_s;
    t.n_samples = len;
    t.signal.resize(static_cast<std::size_t>(len) * kElectrodeCount);
    std::copy_n(rec.samples.begin() + static_cast<std::ptrdiff_t>(start * kElectrodeCount),
                len * kElectrodeCount, t.signal.begin());
    trials.push_back(std::move(t));
  };

  if (rec.run_id == 2) {
    if (rec.n_samples() > 0) slice(0.0, 0, rec.n_samples(), ActionClass::RestClosedEyes);
    return trials;
  }

  const auto cap = static_cast<std::int64_t>(std::llround(kActionTrialSeconds * rec.sample_rate));
  for (const auto& ev : rec.events) {
    auto cls = derive_class(rec.run_id, ev.code);
    if (!cls) continue;
    auto start = static_cast<std::int64_t>(std::llround(ev.onset_s * rec.sample_rate));
    if (start < 0 || start >= rec.n_samples()) continue;
    auto len = static_cast<std::int64_t>(std::llround(ev.duration_s * rec.sample_rate));
    len = std::min({len, cap, rec.n_samples() - start});
    if (len <= 0) continue;
    slice(ev.onset_s, start, len, *cls);
  }
  for (std::size_t i = 0; i < trials.size(); ++i) trials[i].trial_index = static_cast<std::uint16_t>(i);
  return trials;
}

/// Order-preserving subject filter; every exclusion must exist in the list.
inline std::vector<int> filter_subjects(const std::vector<int>& all,
                                        const std::vector<int>& exclusions) {
  for (int e : exclusions) {
    if (std::find(all.begin(), all.end(), e) == all.end())
      throw UnknownSubject("excluded subject not in corpus: " + std::to_string(e));
  }
  std::vector<int> kept;
  kept.reserve(all.size());
  for (int s : all) {
    if (std::find(exclusions.begin(), exclusions.end(), s) == exclusions.end()) kept.push_back(s);
  }
  return kept;
}

/// Default corrupted-subject exclusions for the 103-subject protocols.
/// S088/S092/S100 were captured at a different sampling rate and
/// S089/S104/S106 have irregular annotation timing.
inline std::vector<int> default_excluded_subjects() { return {88, 89, 92, 100, 104, 106}; }

struct CorpusFile {
  int subject_id = 0;
  int run_id = 0;
  std::filesystem::path path;
};

/// Scans `root` for the corpus directory convention S###/S###R##.edf.
inline std::vector<CorpusFile> scan_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<CorpusFile> files;
  if (!fs::exists(root) || !fs::is_directory(root)) return files;
  for (const auto& subject_dir : fs::directory_iterator(root)) {
    if (!subject_dir.is_directory()) continue;
    for (const auto& entry : fs::directory_iterator(subject_dir.path())) {
      if (!entry.is_regular_file() || entry.path().extension() != ".edf") continue;
      int subject = 0, run = 0;
      if (!parse_corpus_name(entry.path().stem().string(), &subject, &run)) continue;
      files.push_back({subject, run, entry.path()});
    }
  }
  std::sort(files.begin(), files.end(), [](const CorpusFile& a, const CorpusFile& b) {
    return std::tie(a.subject_id, a.run_id) < std::tie(b.subject_id, b.run_id);
  });
  return files;
}

inline std::vector<int> corpus_subjects(const std::vector<CorpusFile>& files) {
  std::vector<int> subjects;
  for (const auto& f : files) {
    if (subjects.empty() || subjects.back() != f.subject_id) subjects.push_back(f.subject_id);
  }
  return subjects;
}

}  // namespace eegmesh
