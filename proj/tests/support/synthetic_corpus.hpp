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

// Synthetic EDF corpus with the layout of the motor-imagery dataset:
// S###/S###R##.edf, 64 electrodes at 160 Hz, T0/T1/T2 annotations, runs
// 1..14 (baselines, then alternating real/imagined task cycles). Signals
// carry a per-subject spectral signature (distinct carrier frequencies and
// per-electrode amplitude patterns) plus a per-class tone, corrupted by
// noise, a DC offset and slow drift. The temporal electrodes T9/T10 carry
// no subject information, so masking down to them degrades identification;
// that contrast is what the subset-ordering checks rely on.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "eegmesh/dataset.hpp"
#include "eegmesh/edf.hpp"
#include "eegmesh/layout.hpp"
#include "eegmesh/rng.hpp"

namespace eegmesh::test {

struct SyntheticSpec {
  int subjects = 5;
  int trials_per_task_run = 2;  // >= 2 keeps both T1 and T2 classes present
  double rest_seconds = 8.0;    // closed-eyes baseline length
  double sample_rate = 160.0;
  std::uint64_t seed = 1234;
};

namespace detail {

struct SubjectProfile {
  static constexpr int kCarriers = 3;
  double carrier_hz[kCarriers];
  std::vector<double> carrier_amp;    // [electrode x carrier]
  std::vector<double> carrier_phase;  // [electrode x carrier]
};

inline bool is_temporal_electrode(const std::string& name) { return name == "T9" || name == "T10"; }

inline SubjectProfile make_profile(int subject, std::uint64_t seed,
                                   const std::vector<std::string>& electrodes) {
  SubjectProfile p;
  Rng rng = Rng(seed).fork(static_cast<std::uint64_t>(subject) * 7919);
  for (int k = 0; k < SubjectProfile::kCarriers; ++k) p.carrier_hz[k] = rng.uniform(6.0, 19.0);
  // shared stream so T9/T10 look identical across subjects
  Rng shared = Rng(seed).fork(0x7e3);
  const auto n = electrodes.size();
  p.carrier_amp.resize(n * SubjectProfile::kCarriers);
  p.carrier_phase.resize(n * SubjectProfile::kCarriers);
  for (std::size_t e = 0; e < n; ++e) {
    const bool temporal = is_temporal_electrode(electrodes[e]);
    for (int k = 0; k < SubjectProfile::kCarriers; ++k) {
      Rng& src = temporal ? shared : rng;
      p.carrier_amp[e * SubjectProfile::kCarriers + static_cast<std::size_t>(k)] =
          temporal ? 0.0 : src.uniform(4.0, 18.0);
      p.carrier_phase[e * SubjectProfile::kCarriers + static_cast<std::size_t>(k)] =
          src.uniform(0.0, 2.0 * std::numbers::pi);
    }
  }
  return p;
}

inline double class_tone_hz(ActionClass c) {
  switch (c) {
    case ActionClass::ImaginedLeftFist: return 8.0;
    case ActionClass::ImaginedRightFist: return 11.0;
    case ActionClass::ImaginedBothFists: return 14.0;
    case ActionClass::ImaginedBothFeet: return 17.0;
    case ActionClass::RestClosedEyes: return 0.0;
  }
  return 0.0;
}

/// Per-(class, electrode) gain pattern, shared across subjects.
inline std::vector<double> class_gains(std::uint64_t seed, std::size_t electrodes) {
  Rng rng = Rng(seed).fork(0xac710);
  std::vector<double> g(static_cast<std::size_t>(kActionClassCount) * electrodes);
  for (auto& v : g) v = rng.uniform(2.0, 14.0);
  return g;
}

}  // namespace detail

/// Run ids 3..14 cycle tasks 1..4; imagined-fist runs are 4, 8, 12 and
/// imagined both-fists/feet runs are 6, 10, 14.
inline std::vector<AnnotationEvent> synthetic_events(int run_id, int trials, double* run_seconds) {
  std::vector<AnnotationEvent> events;
  double t = 0.0;
  if (run_id == 1 || run_id == 2) {
    events.push_back({0.0, *run_seconds, "T0"});
    return events;
  }
  events.push_back({0.0, 4.2, "T0"});
  t = 4.2;
  for (int i = 0; i < trials; ++i) {
    events.push_back({t, 4.0, i % 2 == 0 ? "T1" : "T2"});
    t += 4.0;
    events.push_back({t, 4.2, "T0"});
    t += 4.2;
  }
  *run_seconds = std::ceil(t);
  return events;
}

/// Generates S###/S###R##.edf files under `root` and returns their paths.
inline std::vector<std::filesystem::path> make_synthetic_corpus(const std::filesystem::path& root,
                                                                const SyntheticSpec& spec) {
  namespace fs = std::filesystem;
  using detail::SubjectProfile;
  const auto& layout = ElectrodeLayout::standard_10_10();
  const auto& electrodes = layout.electrodes();
  const auto gains = detail::class_gains(spec.seed, electrodes.size());
  std::vector<fs::path> written;

  for (int subject = 1; subject <= spec.subjects; ++subject) {
    const SubjectProfile profile = detail::make_profile(subject, spec.seed, electrodes);
    char dir_name[16];
    std::snprintf(dir_name, sizeof dir_name, "S%03d", subject);
    const fs::path subject_dir = root / dir_name;
    fs::create_directories(subject_dir);

    for (int run = 1; run <= 14; ++run) {
      double run_seconds = run == 2 ? spec.rest_seconds : 6.0;  // run 1 and real runs stay short
      const bool imagined = run == 2 || run == 4 || run == 6 || run == 8 || run == 10 ||
                            run == 12 || run == 14;
      const int trials = run <= 2 ? 0 : (imagined ? spec.trials_per_task_run : 1);
      auto events = synthetic_events(run, trials, &run_seconds);

      const auto n = static_cast<std::int64_t>(run_seconds * spec.sample_rate);
      Recording rec;
      rec.subject_id = subject;
      rec.run_id = run;
      rec.sample_rate = spec.sample_rate;
      rec.electrode_labels = electrodes;
      rec.samples.resize(static_cast<std::size_t>(n) * kElectrodeCount);
      rec.events = events;

      // class active at each sample (from the event list)
      std::vector<int> active(static_cast<std::size_t>(n), -1);
      for (const auto& ev : events) {
        auto cls = derive_class(run, ev.code);
        // real-movement runs still modulate the signal; reuse the imagined
        // tone for them so every run has plausible content
        if (!cls && (ev.code == "T1" || ev.code == "T2")) {
          const bool fists_like = run == 3 || run == 7 || run == 11;
          cls = ev.code == "T1"
                    ? (fists_like ? ActionClass::ImaginedLeftFist : ActionClass::ImaginedBothFists)
                    : (fists_like ? ActionClass::ImaginedRightFist : ActionClass::ImaginedBothFeet);
        }
        if (!cls) continue;
        const auto lo = static_cast<std::int64_t>(ev.onset_s * spec.sample_rate);
        const auto hi = std::min<std::int64_t>(
            n, static_cast<std::int64_t>((ev.onset_s + ev.duration_s) * spec.sample_rate));
        for (std::int64_t i = std::max<std::int64_t>(0, lo); i < hi; ++i)
          active[static_cast<std::size_t>(i)] = static_cast<int>(*cls);
      }

      Rng noise = Rng(spec.seed).fork(static_cast<std::uint64_t>(subject) * 100 +
                                      static_cast<std::uint64_t>(run));
      for (std::int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.sample_rate;
        const double drift = 40.0 + 30.0 * std::sin(2.0 * std::numbers::pi * 0.2 * t);
        const int cls = active[static_cast<std::size_t>(i)];
        const double tone_hz =
            cls >= 0 ? detail::class_tone_hz(static_cast<ActionClass>(cls)) : 0.0;
        const double tone = tone_hz > 0 ? std::sin(2.0 * std::numbers::pi * tone_hz * t) : 0.0;
        for (int e = 0; e < kElectrodeCount; ++e) {
          double v = drift;
          for (int k = 0; k < SubjectProfile::kCarriers; ++k) {
            const auto idx = static_cast<std::size_t>(e) * SubjectProfile::kCarriers +
                             static_cast<std::size_t>(k);
            v += profile.carrier_amp[idx] *
                 std::sin(2.0 * std::numbers::pi * profile.carrier_hz[k] * t +
                          profile.carrier_phase[idx]);
          }
          if (cls >= 0 && tone_hz > 0)
            v += gains[static_cast<std::size_t>(cls) * electrodes.size() + static_cast<std::size_t>(e)] *
                 tone;
          v += noise.normal(0.0, 5.0);
          rec.samples[static_cast<std::size_t>(i * kElectrodeCount + e)] = static_cast<float>(v);
        }
      }

      char file_name[24];
      std::snprintf(file_name, sizeof file_name, "S%03dR%02d.edf", subject, run);
      const fs::path path = subject_dir / file_name;
      write_edf_file(rec, path);
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace eegmesh::test
