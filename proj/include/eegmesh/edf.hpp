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

// EDF/EDF+ container support for the 64-electrode motor-imagery corpus:
// a 256-byte ASCII header, one 256-byte header block per signal, then data
// records of 16-bit little-endian two's-complement samples. Annotations
// travel in a dedicated "EDF Annotations" signal encoded as TALs
// (+onset[\x15duration]\x14text\x14...\x00). The writer emits the same
// layout so synthetic corpora and round-trip tests go through one format.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eegmesh/errors.hpp"
#include "eegmesh/layout.hpp"

namespace eegmesh {

struct AnnotationEvent {
  double onset_s = 0.0;
  double duration_s = 0.0;
  std::string code;  // T0 | T1 | T2
};

/// One subject/run of 64-channel EEG in physical units (microvolts),
/// row-major [n_samples x 64], plus the decoded annotation events.
struct Recording {
  int subject_id = 0;
  int run_id = 0;
  double sample_rate = 0.0;
  std::vector<std::string> electrode_labels;  // canonical montage names, file order
  std::vector<float> samples;                 // [n_samples x n_channels]
  std::vector<AnnotationEvent> events;

  std::int64_t n_channels() const { return static_cast<std::int64_t>(electrode_labels.size()); }
  std::int64_t n_samples() const {
    return electrode_labels.empty() ? 0
                                    : static_cast<std::int64_t>(samples.size()) / n_channels();
  }
  double duration_s() const { return sample_rate > 0 ? n_samples() / sample_rate : 0.0; }

  float sample(std::int64_t i, std::int64_t ch) const {
    return samples[static_cast<std::size_t>(i * n_channels() + ch)];
  }
};

namespace edf_detail {

inline constexpr int kHeaderBytes = 256;
inline constexpr int kSignalHeaderBytes = 256;
inline constexpr char kTalDuration = '\x15';
inline constexpr char kTalEnd = '\x14';
inline constexpr const char* kAnnotationLabel = "EDF Annotations";

inline std::string field(std::span<const unsigned char> bytes, std::size_t off, std::size_t len) {
  if (off + len > bytes.size()) throw MalformedHeader("header field past end of stream");
  for (std::size_t i = off; i < off + len; ++i) {
    if (bytes[i] < 32 || bytes[i] > 126)
      throw MalformedHeader("non-ASCII byte in header at offset " + std::to_string(i));
  }
  std::string s(reinterpret_cast<const char*>(bytes.data()) + off, len);
  // trim trailing/leading spaces
  auto b = s.find_first_not_of(' ');
  auto e = s.find_last_not_of(' ');
  if (b == std::string::npos) return {};
  return s.substr(b, e - b + 1);
}

inline double num_field(std::span<const unsigned char> bytes, std::size_t off, std::size_t len,
                        const char* what) {
  std::string s = field(bytes, off, len);
  if (s.empty()) throw MalformedHeader(std::string("empty numeric header field: ") + what);
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw MalformedHeader(std::string("bad numeric header field ") + what + ": '" + s + "'");
  return v;
}

inline std::string fixed_field(std::string_view text, std::size_t len) {
  std::string out(text.substr(0, len));
  out.resize(len, ' ');
  return out;
}

inline std::string fixed_number(double v, std::size_t len) {
  // shortest representation that fits; EDF numeric fields are plain ASCII
  for (int prec = 7; prec >= 1; --prec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strlen(buf) <= len) {
      std::string s = buf;
      s.resize(len, ' ');
      return s;
    }
  }
  throw MalformedHeader("numeric field overflow");
}

/// Value a numeric field round-trips to after ASCII encoding.
inline double ascii_rounded(double v, std::size_t len) {
  return std::strtod(fixed_number(v, len).c_str(), nullptr);
}

}  // namespace edf_detail

/// Parses TALs from one annotation-signal record. Empty-text TALs (the
/// per-record timestamp) are skipped.
inline void parse_tal_record(std::span<const unsigned char> raw, std::vector<AnnotationEvent>* out) {
  using namespace edf_detail;
  std::size_t i = 0;
  while (i < raw.size() && raw[i] != 0) {
    // onset: [+-]digits[.digits]
    std::size_t j = i;
    while (j < raw.size() && raw[j] != kTalEnd && raw[j] != kTalDuration) ++j;
    if (j >= raw.size()) throw MalformedHeader("unterminated TAL onset");
    std::string onset_text(reinterpret_cast<const char*>(raw.data()) + i, j - i);
    double onset = std::strtod(onset_text.c_str(), nullptr);
    double duration = 0.0;
    if (raw[j] == kTalDuration) {
      std::size_t k = ++j;
      while (j < raw.size() && raw[j] != kTalEnd) ++j;
      if (j >= raw.size()) throw MalformedHeader("unterminated TAL duration");
      std::string dur_text(reinterpret_cast<const char*>(raw.data()) + k, j - k);
      duration = std::strtod(dur_text.c_str(), nullptr);
    }
    ++j;  // past the first \x14
    // zero or more annotation texts, each \x14-terminated
    while (j < raw.size() && raw[j] != 0) {
      std::size_t k = j;
      while (j < raw.size() && raw[j] != kTalEnd) ++j;
      if (j >= raw.size()) throw MalformedHeader("unterminated TAL text");
      std::string text(reinterpret_cast<const char*>(raw.data()) + k, j - k);
      ++j;
      if (!text.empty()) out->push_back({onset, duration, text});
    }
    ++j;  // past the trailing \x00 of this TAL
    i = j;
  }
}

/// Parses an EDF/EDF+ byte stream into a typed Recording. Subject and run ids
/// are not part of the container; callers set them from the file path.
inline Recording parse_edf(std::span<const unsigned char> bytes) {
  using namespace edf_detail;
  if (bytes.size() < kHeaderBytes) throw MalformedHeader("stream shorter than EDF header");
  for (std::size_t i = 0; i < kHeaderBytes; ++i) {
    if (bytes[i] < 32 || bytes[i] > 126)
      throw MalformedHeader("non-ASCII byte in header at offset " + std::to_string(i));
  }

  const std::string version = field(bytes, 0, 8);
  if (version != "0") throw MalformedHeader("unsupported EDF version field: '" + version + "'");

  const double header_bytes = num_field(bytes, 184, 8, "header bytes");
  double n_records = num_field(bytes, 236, 8, "record count");
  const double record_dur = num_field(bytes, 244, 8, "record duration");
  const double ns_d = num_field(bytes, 252, 4, "signal count");
  const int ns = static_cast<int>(ns_d);
  if (ns <= 0 || ns_d != ns) throw MalformedHeader("bad signal count");
  if (record_dur <= 0) throw MalformedHeader("non-positive record duration");
  const std::size_t expect_header = kHeaderBytes + static_cast<std::size_t>(ns) * kSignalHeaderBytes;
  if (header_bytes != static_cast<double>(expect_header))
    throw MalformedHeader("header byte count inconsistent with signal count");
  if (bytes.size() < expect_header) throw TruncatedData("stream ends inside signal headers");

  struct SignalHeader {
    std::string label;
    double phys_min, phys_max, dig_min, dig_max;
    int samples_per_record;
    bool is_annotation;
  };
  std::vector<SignalHeader> sig(static_cast<std::size_t>(ns));
  const std::size_t base = kHeaderBytes;
  auto sig_off = [&](int f, int width, int i) {
    return base + static_cast<std::size_t>(f) * static_cast<std::size_t>(ns) * 1 +
           static_cast<std::size_t>(i) * static_cast<std::size_t>(width);
  };
  // signal headers are stored field-major: all labels, all transducers, ...
  std::size_t off = base;
  for (int i = 0; i < ns; ++i) sig[i].label = field(bytes, off + i * 16, 16);
  off += static_cast<std::size_t>(ns) * 16;  // labels
  off += static_cast<std::size_t>(ns) * 80;  // transducer
  off += static_cast<std::size_t>(ns) * 8;   // physical dimension
  for (int i = 0; i < ns; ++i) sig[i].phys_min = num_field(bytes, off + i * 8, 8, "physical min");
  off += static_cast<std::size_t>(ns) * 8;
  for (int i = 0; i < ns; ++i) sig[i].phys_max = num_field(bytes, off + i * 8, 8, "physical max");
  off += static_cast<std::size_t>(ns) * 8;
  for (int i = 0; i < ns; ++i) sig[i].dig_min = num_field(bytes, off + i * 8, 8, "digital min");
  off += static_cast<std::size_t>(ns) * 8;
  for (int i = 0; i < ns; ++i) sig[i].dig_max = num_field(bytes, off + i * 8, 8, "digital max");
  off += static_cast<std::size_t>(ns) * 8;
  off += static_cast<std::size_t>(ns) * 80;  // prefiltering
  for (int i = 0; i < ns; ++i) {
    double spr = num_field(bytes, off + i * 8, 8, "samples per record");
    sig[i].samples_per_record = static_cast<int>(spr);
    if (spr <= 0 || spr != sig[i].samples_per_record)
      throw MalformedHeader("bad samples-per-record for signal " + std::to_string(i));
  }
  (void)sig_off;

  std::size_t record_size = 0;
  for (auto& s : sig) {
    s.is_annotation = (s.label == kAnnotationLabel);
    if (!s.is_annotation && s.dig_max == s.dig_min)
      throw MalformedHeader("degenerate digital range for signal '" + s.label + "'");
    record_size += static_cast<std::size_t>(s.samples_per_record) * 2;
  }

  const std::size_t payload = bytes.size() - expect_header;
  if (n_records < 0) n_records = std::floor(static_cast<double>(payload) / record_size);
  const auto records = static_cast<std::int64_t>(n_records);
  if (payload < static_cast<std::size_t>(records) * record_size)
    throw TruncatedData("stream declares " + std::to_string(records) + " records but holds " +
                        std::to_string(payload / record_size));

  // Exactly the 64-electrode montage plus at most one annotation channel.
  const auto& layout = ElectrodeLayout::standard_10_10();
  std::vector<int> eeg_index;
  int annotation_index = -1;
  for (int i = 0; i < ns; ++i) {
    if (sig[i].is_annotation) {
      if (annotation_index >= 0) throw UnsupportedLayout("multiple annotation channels");
      annotation_index = i;
    } else {
      eeg_index.push_back(i);
    }
  }
  if (eeg_index.size() != kElectrodeCount)
    throw UnsupportedLayout("expected 64 EEG signals, found " + std::to_string(eeg_index.size()));

  Recording rec;
  rec.electrode_labels.reserve(kElectrodeCount);
  for (int i : eeg_index) {
    auto canon = layout.canonical_name(sig[i].label);
    if (!canon)
      throw UnsupportedLayout("signal label outside the 64-electrode montage: '" + sig[i].label +
                              "'");
    if (std::find(rec.electrode_labels.begin(), rec.electrode_labels.end(), *canon) !=
        rec.electrode_labels.end())
      throw UnsupportedLayout("duplicate electrode label: " + *canon);
    rec.electrode_labels.push_back(*canon);
  }

  const int spr = sig[eeg_index[0]].samples_per_record;
  for (int i : eeg_index)
    if (sig[i].samples_per_record != spr)
      throw UnsupportedLayout("mixed per-signal sample rates are not supported");
  rec.sample_rate = spr / record_dur;

  const std::int64_t n_samples = records * spr;
  rec.samples.resize(static_cast<std::size_t>(n_samples) * kElectrodeCount);

  const unsigned char* data = bytes.data() + expect_header;
  std::vector<std::size_t> sig_offset(static_cast<std::size_t>(ns) + 1, 0);
  for (int i = 0; i < ns; ++i)
    sig_offset[static_cast<std::size_t>(i) + 1] =
        sig_offset[static_cast<std::size_t>(i)] + static_cast<std::size_t>(sig[i].samples_per_record) * 2;

  for (std::int64_t r = 0; r < records; ++r) {
    const unsigned char* rp = data + static_cast<std::size_t>(r) * record_size;
    for (std::size_t c = 0; c < eeg_index.size(); ++c) {
      const int i = eeg_index[c];
      const auto& h = sig[static_cast<std::size_t>(i)];
      const double scale = (h.phys_max - h.phys_min) / (h.dig_max - h.dig_min);
      const unsigned char* sp = rp + sig_offset[static_cast<std::size_t>(i)];
      for (int k = 0; k < spr; ++k) {
        const auto lo = static_cast<std::uint16_t>(sp[2 * k]);
        const auto hi = static_cast<std::uint16_t>(sp[2 * k + 1]);
        const auto digital = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        const double physical = h.phys_min + (digital - h.dig_min) * scale;
        rec.samples[static_cast<std::size_t>((r * spr + k) * kElectrodeCount + static_cast<std::int64_t>(c))] =
            static_cast<float>(physical);
      }
    }
    if (annotation_index >= 0) {
      const auto& h = sig[static_cast<std::size_t>(annotation_index)];
      const unsigned char* sp = rp + sig_offset[static_cast<std::size_t>(annotation_index)];
      parse_tal_record({sp, static_cast<std::size_t>(h.samples_per_record) * 2}, &rec.events);
    }
  }

  // keep the three-symbol task alphabet only, sorted by onset
  std::erase_if(rec.events, [](const AnnotationEvent& e) {
    return e.code != "T0" && e.code != "T1" && e.code != "T2";
  });
  std::stable_sort(rec.events.begin(), rec.events.end(),
                   [](const auto& a, const auto& b) { return a.onset_s < b.onset_s; });

  // subject/run ride in the recording-id field when this toolkit wrote the
  // file; corpus files carry them in the path instead (see parse_edf_file)
  const std::string rid = field(bytes, 88, 80);
  if (auto at = rid.find(" S"); at != std::string::npos && rid.size() >= at + 10 &&
                                rid[at + 6] == 'R') {
    int subject = 0, run = 0;
    if (parse_corpus_name(rid.substr(at + 1, 4) + rid.substr(at + 6, 3), &subject, &run)) {
      rec.subject_id = subject;
      rec.run_id = run;
    }
  }
  return rec;
}

inline Recording parse_edf(const std::vector<unsigned char>& bytes) {
  return parse_edf(std::span<const unsigned char>(bytes.data(), bytes.size()));
}

/// Reads S###R##.edf naming into (subject, run); returns false when the name
/// does not follow the corpus convention.
inline bool parse_corpus_name(std::string_view stem, int* subject, int* run) {
  if (stem.size() != 7 || stem[0] != 'S' || stem[4] != 'R') return false;
  auto digits = [](std::string_view s, int* out) {
    int v = 0;
    for (char c : s) {
      if (c < '0' || c > '9') return false;
      v = v * 10 + (c - '0');
    }
    *out = v;
    return true;
  };
  return digits(stem.substr(1, 3), subject) && digits(stem.substr(5, 2), run);
}

inline Recording parse_edf_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  Recording rec = parse_edf(bytes);
  int subject = 0, run = 0;
  if (parse_corpus_name(path.stem().string(), &subject, &run)) {
    rec.subject_id = subject;
    rec.run_id = run;
  }
  return rec;
}

/// Serializes a Recording back to EDF+ bytes. Physical ranges are derived
/// per signal from the data; the quantization step is (max-min)/65534, so a
/// write-then-parse round trip reproduces samples within one step.
inline std::vector<unsigned char> write_edf(const Recording& rec) {
  using namespace edf_detail;
  const auto n_ch = rec.n_channels();
  if (n_ch != kElectrodeCount) throw UnsupportedLayout("writer expects 64 electrode channels");
  if (rec.sample_rate <= 0) throw MalformedHeader("writer needs a positive sample rate");
  const int spr = static_cast<int>(rec.sample_rate);  // one-second records
  if (spr != rec.sample_rate) throw MalformedHeader("writer supports integer sample rates only");
  if (rec.n_samples() % spr != 0)
    throw MalformedHeader("sample count must fill whole one-second records");
  const std::int64_t records = rec.n_samples() / spr;

  // TAL payload per record: timestamp TAL + events starting in that record.
  std::vector<std::string> tal(static_cast<std::size_t>(records));
  for (std::int64_t r = 0; r < records; ++r) {
    char head[32];
    std::snprintf(head, sizeof head, "+%lld%c%c", static_cast<long long>(r), kTalEnd, kTalEnd);
    tal[static_cast<std::size_t>(r)] = head;
    tal[static_cast<std::size_t>(r)].push_back('\0');
  }
  for (const auto& ev : rec.events) {
    auto r = static_cast<std::int64_t>(std::floor(ev.onset_s));
    if (r < 0 || r >= records) throw MalformedHeader("event onset outside recording");
    char buf[96];
    std::snprintf(buf, sizeof buf, "+%.7g%c%.7g%c%s%c", ev.onset_s, kTalDuration, ev.duration_s,
                  kTalEnd, ev.code.c_str(), kTalEnd);
    auto& t = tal[static_cast<std::size_t>(r)];
    t.append(buf);
    t.push_back('\0');
  }
  std::size_t ann_bytes = 0;
  for (auto& t : tal) ann_bytes = std::max(ann_bytes, t.size());
  ann_bytes = (ann_bytes + 2) & ~std::size_t{1};  // room for terminator, even
  const int ann_spr = static_cast<int>(ann_bytes / 2);

  const int ns = kElectrodeCount + 1;
  std::vector<double> pmin(kElectrodeCount), pmax(kElectrodeCount);
  for (std::int64_t c = 0; c < n_ch; ++c) {
    double lo = rec.samples.empty() ? -1.0 : rec.sample(0, c);
    double hi = lo;
    for (std::int64_t i = 0; i < rec.n_samples(); ++i) {
      lo = std::min(lo, static_cast<double>(rec.sample(i, c)));
      hi = std::max(hi, static_cast<double>(rec.sample(i, c)));
    }
    if (hi - lo < 1e-6) hi = lo + 1.0;
    // Pad the range so that after 8-char ASCII rounding of the limits the
    // data still falls inside [pmin, pmax]; digitization below uses the
    // rounded values, making writer and parser share one affine map.
    const double pad = (hi - lo) * 1e-4 + std::max(std::abs(lo), std::abs(hi)) * 1e-5 + 1e-9;
    pmin[static_cast<std::size_t>(c)] = ascii_rounded(lo - pad, 8);
    pmax[static_cast<std::size_t>(c)] = ascii_rounded(hi + pad, 8);
  }

  std::string out;
  out.reserve(static_cast<std::size_t>(kHeaderBytes) * (1 + ns) +
              static_cast<std::size_t>(records) *
                  (static_cast<std::size_t>(kElectrodeCount) * spr * 2 + ann_bytes));
  char ident[96];
  std::snprintf(ident, sizeof ident, "S%03d R%02d", rec.subject_id, rec.run_id);
  out += fixed_field("0", 8);
  out += fixed_field("X X X X", 80);
  out += fixed_field(std::string("Startdate 01-JAN-2009 ") + ident, 80);
  out += fixed_field("01.01.09", 8);
  out += fixed_field("00.00.00", 8);
  out += fixed_number(kHeaderBytes * (1.0 + ns), 8);
  out += fixed_field("EDF+C", 44);
  out += fixed_number(static_cast<double>(records), 8);
  out += fixed_number(1.0, 8);
  out += fixed_field(std::to_string(ns), 4);

  auto each_signal = [&](auto&& fn) {
    for (int i = 0; i < kElectrodeCount; ++i) fn(i, false);
    fn(kElectrodeCount, true);
  };
  each_signal([&](int i, bool ann) {
    out += fixed_field(ann ? kAnnotationLabel : rec.electrode_labels[static_cast<std::size_t>(i)], 16);
  });
  each_signal([&](int, bool) { out += fixed_field("", 80); });                      // transducer
  each_signal([&](int, bool ann) { out += fixed_field(ann ? "" : "uV", 8); });      // dimension
  each_signal([&](int i, bool ann) { out += fixed_number(ann ? -1.0 : pmin[static_cast<std::size_t>(i)], 8); });
  each_signal([&](int i, bool ann) { out += fixed_number(ann ? 1.0 : pmax[static_cast<std::size_t>(i)], 8); });
  each_signal([&](int, bool) { out += fixed_number(-32767.0, 8); });
  each_signal([&](int, bool) { out += fixed_number(32767.0, 8); });
  each_signal([&](int, bool) { out += fixed_field("", 80); });  // prefiltering
  each_signal([&](int, bool ann) { out += fixed_number(ann ? ann_spr : spr, 8); });
  each_signal([&](int, bool) { out += fixed_field("", 32); });  // reserved

  std::vector<unsigned char> bytes(out.begin(), out.end());
  bytes.reserve(bytes.size() + static_cast<std::size_t>(records) *
                                   (static_cast<std::size_t>(kElectrodeCount) * spr * 2 + ann_bytes));
  for (std::int64_t r = 0; r < records; ++r) {
    for (std::int64_t c = 0; c < n_ch; ++c) {
      const double lo = pmin[static_cast<std::size_t>(c)], hi = pmax[static_cast<std::size_t>(c)];
      const double scale = 65534.0 / (hi - lo);
      for (int k = 0; k < spr; ++k) {
        const double v = rec.sample(r * spr + k, c);
        auto digital = static_cast<std::int32_t>(std::lround((v - lo) * scale)) - 32767;
        digital = std::clamp(digital, -32767, 32767);
        const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(digital));
        bytes.push_back(static_cast<unsigned char>(u & 0xff));
        bytes.push_back(static_cast<unsigned char>(u >> 8));
      }
    }
    const auto& t = tal[static_cast<std::size_t>(r)];
    for (std::size_t k = 0; k < ann_bytes; ++k)
      bytes.push_back(k < t.size() ? static_cast<unsigned char>(t[k]) : 0);
  }
  return bytes;
}

inline void write_edf_file(const Recording& rec, const std::filesystem::path& path) {
  auto bytes = write_edf(rec);
  std::ofstream outf(path, std::ios::binary | std::ios::trunc);
  if (!outf) throw DataError("cannot write " + path.string());
  outf.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace eegmesh
