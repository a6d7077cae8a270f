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
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eegmesh/errors.hpp"

namespace eegmesh {

inline constexpr int kGridRows = 10;
inline constexpr int kGridCols = 11;
inline constexpr int kGridCells = kGridRows * kGridCols;
inline constexpr int kElectrodeCount = 64;

struct GridCell {
  int row = 0;
  int col = 0;
  int flat() const { return row * kGridCols + col; }
};

/// The 64-position 10-10 montage used by the corpus, projected onto a
/// 10 x 11 scalp grid, one electrode per cell, 46 cells left empty.
///
/// The row/column assignment is a reconstruction of the standard 10-10
/// head projection (the source material defines it only pictorially);
/// see README "Mesh layout" for the full table.
class ElectrodeLayout {
 public:
  static const ElectrodeLayout& standard_10_10() {
    static const ElectrodeLayout layout = make_standard();
    return layout;
  }

  const std::vector<std::string>& electrodes() const { return names_; }

  bool contains(std::string_view name) const {
    return cells_.find(canonical_key(name)) != cells_.end();
  }

  GridCell cell_of(std::string_view name) const {
    auto it = cells_.find(canonical_key(name));
    if (it == cells_.end())
      throw UnknownElectrode("electrode not in 10-10 layout: " + std::string(name));
    return it->second;
  }

  /// Maps an EDF label (case-insensitive, possibly padded with '.' as in the
  /// corpus files) to its canonical montage spelling, or nullopt.
  std::optional<std::string> canonical_name(std::string_view raw) const {
    std::string key = canonical_key(strip_label(raw));
    auto it = canon_.find(key);
    if (it == canon_.end()) return std::nullopt;
    return it->second;
  }

  /// Cell occupancy mask in row-major grid order.
  std::array<bool, kGridCells> occupancy() const {
    std::array<bool, kGridCells> occ{};
    for (const auto& [key, cell] : cells_) occ[static_cast<std::size_t>(cell.flat())] = true;
    return occ;
  }

  static std::string strip_label(std::string_view raw) {
    std::size_t b = 0, e = raw.size();
    while (b < e && (raw[b] == ' ' || raw[b] == '.')) ++b;
    while (e > b && (raw[e - 1] == ' ' || raw[e - 1] == '.')) --e;
    return std::string(raw.substr(b, e - b));
  }

 private:
  static std::string canonical_key(std::string_view name) {
    std::string key;
    key.reserve(name.size());
    for (char c : name) key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return key;
  }

  static ElectrodeLayout make_standard() {
    struct Row {
      int row;
      int first_col;
      std::vector<const char*> names;
    };
    // Top of the head (frontal) is row 0, inion is row 9.
    const std::vector<Row> rows = {
        {0, 4, {"Fp1", "Fpz", "Fp2"}},
        {1, 3, {"AF7", "AF3", "AFz", "AF4", "AF8"}},
        {2, 1, {"F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8"}},
        {3, 1, {"FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8"}},
        {4, 0, {"T9", "T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8", "T10"}},
        {5, 1, {"TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8"}},
        {6, 1, {"P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8"}},
        {7, 3, {"PO7", "PO3", "POz", "PO4", "PO8"}},
        {8, 4, {"O1", "Oz", "O2"}},
        {9, 5, {"Iz"}},
    };
    ElectrodeLayout layout;
    for (const auto& r : rows) {
      int col = r.first_col;
      for (const char* name : r.names) {
        layout.names_.emplace_back(name);
        layout.cells_[canonical_key(name)] = GridCell{r.row, col};
        layout.canon_[canonical_key(name)] = name;
        ++col;
      }
    }
    return layout;
  }

  std::vector<std::string> names_;
  std::unordered_map<std::string, GridCell> cells_;
  std::unordered_map<std::string, std::string> canon_;
};

/// Named electrode subsets emulating reduced wearable montages. Masking keeps
/// the tensor shape and zeroes every cell outside the subset.
enum class SubsetName : std::uint8_t {
  Full = 0,
  Enobio8 = 1,
  EEGlass4 = 2,
  EEGlass3 = 3,
  EEGlass2 = 4,
};

struct SubsetConfig {
  SubsetName name = SubsetName::Full;
  std::vector<std::string> kept_electrodes;
};

inline const char* subset_label(SubsetName name) {
  switch (name) {
    case SubsetName::Full: return "full";
    case SubsetName::Enobio8: return "enobio8";
    case SubsetName::EEGlass4: return "eeglass4";
    case SubsetName::EEGlass3: return "eeglass3";
    case SubsetName::EEGlass2: return "eeglass2";
  }
  return "?";
}

inline SubsetConfig subset_config(SubsetName name) {
  switch (name) {
    case SubsetName::Full:
      return {name, ElectrodeLayout::standard_10_10().electrodes()};
    case SubsetName::Enobio8:
      return {name, {"Fpz", "C3", "C4", "Pz"}};
    case SubsetName::EEGlass4:
      return {name, {"Fpz", "T9", "T10", "Iz"}};
    case SubsetName::EEGlass3:
      return {name, {"Fpz", "T9", "T10"}};
    case SubsetName::EEGlass2:
      return {name, {"T9", "T10"}};
  }
  throw UsageError("unknown subset");
}

inline SubsetConfig subset_by_name(std::string_view text) {
  std::string key;
  for (char c : text) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (auto n : {SubsetName::Full, SubsetName::Enobio8, SubsetName::EEGlass4, SubsetName::EEGlass3,
                 SubsetName::EEGlass2}) {
    if (key == subset_label(n)) return subset_config(n);
  }
  throw UsageError("unknown electrode subset: " + std::string(text) +
                   " (expected full|enobio8|eeglass4|eeglass3|eeglass2)");
}

}  // namespace eegmesh
