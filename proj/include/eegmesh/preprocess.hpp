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

// Trial-to-tensor preprocessing: high-pass filter, non-overlapping windows,
// phased-subsampling augmentation, per-electrode z-score and the 10 x 11
// mesh-to-image relocation with optional electrode-subset masking.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eegmesh/dataset.hpp"
#include "eegmesh/errors.hpp"
#include "eegmesh/filter.hpp"
#include "eegmesh/layout.hpp"

namespace eegmesh {

/// One non-overlapping window of M samples over all 64 electrodes.
struct Segment {
  std::int64_t window_samples = 0;  // M
  std::vector<float> samples;       // [M x 64]
  int subject_id = 0;
  int run_id = 0;
  ActionClass action = ActionClass::RestClosedEyes;
  std::uint16_t trial_index = 0;
  std::uint16_t segment_index = 0;

  float& at(std::int64_t i, std::int64_t ch) {
    return samples[static_cast<std::size_t>(i * kElectrodeCount + ch)];
  }
  float at(std::int64_t i, std::int64_t ch) const {
    return samples[static_cast<std::size_t>(i * kElectrodeCount + ch)];
  }
};

/// N interleaved sub-segments of one window; sub-segment n (1-based) holds
/// the samples at original indices n + j*N.
struct SubSegmentStack {
  int phase_count = 0;              // N
  std::int64_t sub_length = 0;      // floor(M/N)
  std::vector<std::vector<float>> sub_segments;  // N entries, each [sub_length x 64]
  int subject_id = 0;
  int run_id = 0;
  ActionClass action = ActionClass::RestClosedEyes;
  std::uint16_t trial_index = 0;
  std::uint16_t segment_index = 0;
};

/// Model-ready tensor [T x 10 x 11 x 1] plus provenance. Cells without an
/// electrode, and cells masked out by a subset, are exactly zero.
struct MeshSequence {
  std::int64_t time_steps = 0;  // T
  std::vector<float> values;    // [T x 10 x 11], channel dim of 1 implicit
  int subject_id = 0;
  int run_id = 0;
  ActionClass action = ActionClass::RestClosedEyes;
  std::uint16_t trial_index = 0;
  std::uint16_t segment_index = 0;
  std::uint8_t phase = 1;  // 1..N

  float& at(std::int64_t t, int row, int col) {
    return values[static_cast<std::size_t>((t * kGridRows + row) * kGridCols + col)];
  }
  float at(std::int64_t t, int row, int col) const {
    return values[static_cast<std::size_t>((t * kGridRows + row) * kGridCols + col)];
  }
};

/// Splits a trial into floor(len/M) consecutive non-overlapping windows;
/// the trailing remainder is discarded.
inline std::vector<Segment> segment_trial(const LabeledTrial& trial, std::int64_t window_samples) {
  if (window_samples <= 0) throw WindowTooLarge("window length must be positive");
  if (window_samples > trial.n_samples)
    throw WindowTooLarge("window of " + std::to_string(window_samples) + " samples exceeds trial of " +
                         std::to_string(trial.n_samples));
  const std::int64_t count = trial.n_samples / window_samples;
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t s = 0; s < count; ++s) {
    Segment seg;
    seg.window_samples = window_samples;
    seg.subject_id = trial.subject_id;
    seg.run_id = trial.run_id;
    seg.action = trial.action;
    seg.trial_index = trial.trial_index;
    seg.segment_index = static_cast<std::uint16_t>(s);
    seg.samples.assign(
        trial.signal.begin() + static_cast<std::ptrdiff_t>(s * window_samples * kElectrodeCount),
        trial.signal.begin() + static_cast<std::ptrdiff_t>((s + 1) * window_samples * kElectrodeCount));
    out.push_back(std::move(seg));
  }
  return out;
}

/// Interleaved subsampling: sub-segment n keeps indices {n + jN}, giving N
/// augmented copies at 1/N temporal resolution. When N divides M the
/// sub-segments partition the window exactly.
inline SubSegmentStack phased_subsample(const Segment& segment, int phase_count) {
  const std::int64_t m = segment.window_samples;
  if (phase_count < 1 || phase_count > m)
    throw InvalidPhaseCount("phase count must lie in 1..M (M=" + std::to_string(m) + ")");
  SubSegmentStack stack;
  stack.phase_count = phase_count;
  stack.sub_length = m / phase_count;
  stack.subject_id = segment.subject_id;
  stack.run_id = segment.run_id;
  stack.action = segment.action;
  stack.trial_index = segment.trial_index;
  stack.segment_index = segment.segment_index;
  stack.sub_segments.resize(static_cast<std::size_t>(phase_count));
  for (int n = 0; n < phase_count; ++n) {
    auto& sub = stack.sub_segments[static_cast<std::size_t>(n)];
    sub.resize(static_cast<std::size_t>(stack.sub_length) * kElectrodeCount);
    for (std::int64_t j = 0; j < stack.sub_length; ++j) {
      const std::int64_t src = n + j * phase_count;  // 0-based phase offset
      std::copy_n(segment.samples.begin() + static_cast<std::ptrdiff_t>(src * kElectrodeCount),
                  kElectrodeCount, sub.begin() + static_cast<std::ptrdiff_t>(j * kElectrodeCount));
    }
  }
  return stack;
}

/// Per-electrode standardization statistics. `provenance` records which
/// population the stats were fitted on, so downstream code can assert that
/// test data is never part of the fit.
struct ZscoreStats {
  std::array<double, kElectrodeCount> mean{};
  std::array<double, kElectrodeCount> stddev{};
  std::vector<int> degenerate_electrodes;  // zero variance, stddev replaced by 1
  std::string provenance;
  bool fitted = false;
};

namespace detail {

class RunningMoments {
 public:
  void add(int ch, double v) {
    sum_[static_cast<std::size_t>(ch)] += v;
    sumsq_[static_cast<std::size_t>(ch)] += v * v;
    ++count_[static_cast<std::size_t>(ch)];
  }

  ZscoreStats finish(std::string provenance) const {
    ZscoreStats stats;
    stats.provenance = std::move(provenance);
    for (int ch = 0; ch < kElectrodeCount; ++ch) {
      const auto c = static_cast<double>(count_[static_cast<std::size_t>(ch)]);
      if (c < 2) throw InsufficientData("z-score fit needs at least 2 samples per electrode");
      const double mean = sum_[static_cast<std::size_t>(ch)] / c;
      const double var = std::max(0.0, sumsq_[static_cast<std::size_t>(ch)] / c - mean * mean);
      stats.mean[static_cast<std::size_t>(ch)] = mean;
      // population standard deviation; zero-variance electrodes get 1 so the
      // transform maps them to constant zero
      double sd = std::sqrt(var);
      if (sd <= 0.0) {
        sd = 1.0;
        stats.degenerate_electrodes.push_back(ch);
      }
      stats.stddev[static_cast<std::size_t>(ch)] = sd;
    }
    stats.fitted = true;
    return stats;
  }

 private:
  std::array<double, kElectrodeCount> sum_{};
  std::array<double, kElectrodeCount> sumsq_{};
  std::array<std::int64_t, kElectrodeCount> count_{};
};

}  // namespace detail

/// Fits per-electrode mean and population stddev over a segment population.
inline ZscoreStats zscore_fit(std::span<const Segment> segments, std::string provenance = "fit") {
  detail::RunningMoments m;
  for (const auto& seg : segments)
    for (std::int64_t i = 0; i < seg.window_samples; ++i)
      for (int ch = 0; ch < kElectrodeCount; ++ch) m.add(ch, seg.at(i, ch));
  return m.finish(std::move(provenance));
}

inline void zscore_apply(Segment* segment, const ZscoreStats& stats) {
  if (!stats.fitted) throw InsufficientData("z-score stats not fitted");
  for (std::int64_t i = 0; i < segment->window_samples; ++i)
    for (int ch = 0; ch < kElectrodeCount; ++ch)
      segment->at(i, ch) = static_cast<float>(
          (segment->at(i, ch) - stats.mean[static_cast<std::size_t>(ch)]) /
          stats.stddev[static_cast<std::size_t>(ch)]);
}

/// Flat grid-cell index of every channel, aligned with `labels`.
inline std::vector<int> mesh_cells(const ElectrodeLayout& layout,
                                   const std::vector<std::string>& labels) {
  if (labels.size() != kElectrodeCount)
    throw LayoutMismatch("expected 64 channel labels, got " + std::to_string(labels.size()));
  std::vector<int> cells;
  cells.reserve(labels.size());
  std::array<bool, kGridCells> used{};
  for (const auto& name : labels) {
    const int flat = layout.cell_of(name).flat();
    if (used[static_cast<std::size_t>(flat)]) throw LayoutMismatch("two channels map to one cell: " + name);
    used[static_cast<std::size_t>(flat)] = true;
    cells.push_back(flat);
  }
  return cells;
}

/// Relocates each sub-segment into mesh frames: cell (r, c) at time t holds
/// the mapped electrode's sample. The N phases come back as N independent
/// training examples.
inline std::vector<MeshSequence> to_mesh(const SubSegmentStack& stack,
                                         const std::vector<int>& channel_cells) {
  if (channel_cells.size() != kElectrodeCount)
    throw LayoutMismatch("channel/cell map must cover 64 electrodes");
  std::vector<MeshSequence> out;
  out.reserve(stack.sub_segments.size());
  for (int n = 0; n < stack.phase_count; ++n) {
    MeshSequence mesh;
    mesh.time_steps = stack.sub_length;
    mesh.values.assign(static_cast<std::size_t>(stack.sub_length) * kGridCells, 0.0f);
    mesh.subject_id = stack.subject_id;
    mesh.run_id = stack.run_id;
    mesh.action = stack.action;
    mesh.trial_index = stack.trial_index;
    mesh.segment_index = stack.segment_index;
    mesh.phase = static_cast<std::uint8_t>(n + 1);
    const auto& sub = stack.sub_segments[static_cast<std::size_t>(n)];
    for (std::int64_t t = 0; t < stack.sub_length; ++t) {
      for (int ch = 0; ch < kElectrodeCount; ++ch) {
        mesh.values[static_cast<std::size_t>(t * kGridCells + channel_cells[static_cast<std::size_t>(ch)])] =
            sub[static_cast<std::size_t>(t * kElectrodeCount + ch)];
      }
    }
    out.push_back(std::move(mesh));
  }
  return out;
}

/// Zeroes every cell whose electrode is not in the subset. Shape-preserving
/// and idempotent.
inline void apply_subset(MeshSequence* mesh, const SubsetConfig& subset,
                         const ElectrodeLayout& layout) {
  if (subset.name == SubsetName::Full) return;
  std::array<bool, kGridCells> keep{};
  for (const auto& name : subset.kept_electrodes)
    keep[static_cast<std::size_t>(layout.cell_of(name).flat())] = true;
  for (std::int64_t t = 0; t < mesh->time_steps; ++t)
    for (int cell = 0; cell < kGridCells; ++cell)
      if (!keep[static_cast<std::size_t>(cell)])
        mesh->values[static_cast<std::size_t>(t * kGridCells + cell)] = 0.0f;
}

/// Applies fitted per-electrode stats directly to mesh cells (the relocation
/// is per-electrode, so standardizing cells equals standardizing channels).
/// Cells of electrodes outside `subset` stay zero because masking runs last.
inline void zscore_apply_mesh(MeshSequence* mesh, const ZscoreStats& stats,
                              const std::vector<int>& channel_cells) {
  if (!stats.fitted) throw InsufficientData("z-score stats not fitted");
  for (std::int64_t t = 0; t < mesh->time_steps; ++t)
    for (int ch = 0; ch < kElectrodeCount; ++ch) {
      auto& v = mesh->values[static_cast<std::size_t>(t * kGridCells + channel_cells[static_cast<std::size_t>(ch)])];
      v = static_cast<float>((v - stats.mean[static_cast<std::size_t>(ch)]) /
                             stats.stddev[static_cast<std::size_t>(ch)]);
    }
}

/// Fits stats from an already-meshed population (used when the z-score scope
/// is the training corpus and meshes come from the cache).
inline ZscoreStats zscore_fit_meshes(std::span<const MeshSequence* const> meshes,
                                     const std::vector<int>& channel_cells,
                                     std::string provenance) {
  detail::RunningMoments m;
  for (const MeshSequence* mesh : meshes)
    for (std::int64_t t = 0; t < mesh->time_steps; ++t)
      for (int ch = 0; ch < kElectrodeCount; ++ch)
        m.add(ch, mesh->values[static_cast<std::size_t>(t * kGridCells +
                                                        channel_cells[static_cast<std::size_t>(ch)])]);
  return m.finish(std::move(provenance));
}

enum class ZscoreMode : std::uint8_t {
  CorpusFit = 0,   // cache holds raw meshes; stats fitted on the training split
  PerSegment = 1,  // each window standardized by its own statistics
};

struct PreprocessOptions {
  double window_seconds = 1.0;
  int phase_count = 4;
  double highpass_cutoff_hz = 1.0;
  SubsetConfig subset = subset_config(SubsetName::Full);
  ZscoreMode zscore = ZscoreMode::CorpusFit;

  std::int64_t window_samples(double sample_rate) const {
    return static_cast<std::int64_t>(std::llround(window_seconds * sample_rate));
  }
};

/// Full per-recording pipeline: filter, slice into trials, window, subsample,
/// (optionally) per-segment standardize, relocate, mask. Corpus-level z-score
/// is intentionally not applied here; it belongs to the split that fits it.
inline std::vector<MeshSequence> preprocess_recording(const Recording& rec,
                                                      const PreprocessOptions& opt,
                                                      const ElectrodeLayout& layout) {
  const std::int64_t window = opt.window_samples(rec.sample_rate);
  if (window < opt.phase_count) throw InvalidPhaseCount("window shorter than phase count");

  Recording filtered = rec;
  filtered.samples = highpass(rec.samples, rec.n_channels(), rec.sample_rate, opt.highpass_cutoff_hz);

  const auto cells = mesh_cells(layout, rec.electrode_labels);
  std::vector<MeshSequence> meshes;
  auto trials = extract_trials(filtered);
  for (auto& trial : trials) {
    if (trial.n_samples < window) continue;  // too short for one window
    for (auto& seg : segment_trial(trial, window)) {
      if (opt.zscore == ZscoreMode::PerSegment) {
        auto stats = zscore_fit({&seg, 1}, "segment");
        zscore_apply(&seg, stats);
      }
      auto stack = phased_subsample(seg, opt.phase_count);
      for (auto& mesh : to_mesh(stack, cells)) {
        apply_subset(&mesh, opt.subset, layout);
        meshes.push_back(std::move(mesh));
      }
    }
  }
  return meshes;
}

}  // namespace eegmesh
