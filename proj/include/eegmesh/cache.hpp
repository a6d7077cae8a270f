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

// Preprocessed-mesh cache, one file per (subject, run, window, phase count,
// subset). Everything is little-endian. Layout:
//
//   magic   "EMC1"
//   u32     version (1)
//   u32     subject, run, window_samples, phase_count
//   u8      subset id, u8 z-score mode, u16 reserved
//   u32     mesh count, time steps, rows (10), cols (11)
//   u64     content hash of the source EDF bytes
//   then per mesh: u8 class, u8 phase, u16 trial, u16 segment, u16 reserved,
//                  time_steps*110 float32 values
//
// Meshes are stored before corpus-level z-scoring; standardization is fitted
// on the training split at experiment time. In per-segment mode the values
// are already standardized and the mode byte says so.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eegmesh/binio.hpp"
#include "eegmesh/errors.hpp"
#include "eegmesh/layout.hpp"
#include "eegmesh/preprocess.hpp"

namespace eegmesh {

inline constexpr std::uint32_t kCacheVersion = 1;

struct MeshCache {
  int subject_id = 0;
  int run_id = 0;
  std::int64_t window_samples = 0;
  int phase_count = 0;
  SubsetName subset = SubsetName::Full;
  ZscoreMode zscore = ZscoreMode::CorpusFit;
  std::int64_t time_steps = 0;
  std::uint64_t source_hash = 0;
  std::vector<MeshSequence> meshes;
};

/// Hash covering the source bytes and every preprocessing parameter; a cache
/// file is valid only while this matches.
inline std::uint64_t cache_key_hash(std::uint64_t file_hash, std::int64_t window_samples,
                                    int phase_count, SubsetName subset, ZscoreMode zscore) {
  BinaryWriter w;
  w.u64(file_hash);
  w.u32(static_cast<std::uint32_t>(window_samples));
  w.u32(static_cast<std::uint32_t>(phase_count));
  w.u8(static_cast<std::uint8_t>(subset));
  w.u8(static_cast<std::uint8_t>(zscore));
  return fnv1a({w.bytes().data(), w.bytes().size()});
}

inline std::string cache_file_name(int subject, int run, std::int64_t window_samples,
                                   int phase_count, SubsetName subset) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "S%03dR%02d_w%lld_n%d_%s.emc", subject, run,
                static_cast<long long>(window_samples), phase_count, subset_label(subset));
  return buf;
}

inline void write_mesh_cache(const MeshCache& cache, const std::filesystem::path& path) {
  BinaryWriter w;
  w.tag("EMC1");
  w.u32(kCacheVersion);
  w.u32(static_cast<std::uint32_t>(cache.subject_id));
  w.u32(static_cast<std::uint32_t>(cache.run_id));
  w.u32(static_cast<std::uint32_t>(cache.window_samples));
  w.u32(static_cast<std::uint32_t>(cache.phase_count));
  w.u8(static_cast<std::uint8_t>(cache.subset));
  w.u8(static_cast<std::uint8_t>(cache.zscore));
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(cache.meshes.size()));
  w.u32(static_cast<std::uint32_t>(cache.time_steps));
  w.u32(kGridRows);
  w.u32(kGridCols);
  w.u64(cache.source_hash);
  for (const auto& mesh : cache.meshes) {
    if (mesh.time_steps != cache.time_steps) throw ShapeMismatch("inconsistent mesh time steps in cache");
    w.u8(static_cast<std::uint8_t>(mesh.action));
    w.u8(mesh.phase);
    w.u16(mesh.trial_index);
    w.u16(mesh.segment_index);
    w.u16(0);
    w.f32_span(mesh.values);
  }
  w.save(path);
}

inline MeshCache read_mesh_cache(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::from_file(path);
  r.expect_tag("EMC1", "mesh cache");
  if (r.u32() != kCacheVersion) throw DataError("unsupported mesh cache version: " + path.string());
  MeshCache cache;
  cache.subject_id = static_cast<int>(r.u32());
  cache.run_id = static_cast<int>(r.u32());
  cache.window_samples = r.u32();
  cache.phase_count = static_cast<int>(r.u32());
  cache.subset = static_cast<SubsetName>(r.u8());
  cache.zscore = static_cast<ZscoreMode>(r.u8());
  r.u16();
  const std::uint32_t count = r.u32();
  cache.time_steps = r.u32();
  const std::uint32_t rows = r.u32(), cols = r.u32();
  if (rows != kGridRows || cols != kGridCols) throw DataError("unexpected grid shape in cache");
  cache.source_hash = r.u64();
  cache.meshes.resize(count);
  for (auto& mesh : cache.meshes) {
    mesh.time_steps = cache.time_steps;
    mesh.subject_id = cache.subject_id;
    mesh.run_id = cache.run_id;
    mesh.action = static_cast<ActionClass>(r.u8());
    mesh.phase = r.u8();
    mesh.trial_index = r.u16();
    mesh.segment_index = r.u16();
    r.u16();
    mesh.values.resize(static_cast<std::size_t>(cache.time_steps) * kGridCells);
    r.f32_into(mesh.values);
  }
  return cache;
}

/// Returns the stored source hash when a cache file exists and is readable.
inline std::optional<std::uint64_t> cache_source_hash(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    BinaryReader r = BinaryReader::from_file(path);
    r.expect_tag("EMC1", "mesh cache");
    if (r.u32() != kCacheVersion) return std::nullopt;
    for (int i = 0; i < 4; ++i) r.u32();
    r.u8();
    r.u8();
    r.u16();
    for (int i = 0; i < 4; ++i) r.u32();
    return r.u64();
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace eegmesh
