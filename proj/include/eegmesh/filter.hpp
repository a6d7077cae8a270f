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

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "eegmesh/errors.hpp"

namespace eegmesh {

/// One biquad in direct form II transposed.
struct Biquad {
  double b0, b1, b2;  // numerator
  double a1, a2;      // denominator (a0 normalized to 1)
};

/// 4th-order Butterworth high-pass as a cascade of two biquads, designed by
/// the bilinear transform with frequency prewarping so the -3 dB point lands
/// exactly on the requested cutoff.
class HighpassFilter {
 public:
  HighpassFilter(double cutoff_hz, double sample_rate_hz)
      : cutoff_hz_(cutoff_hz), sample_rate_hz_(sample_rate_hz) {
    if (cutoff_hz <= 0.0 || cutoff_hz >= sample_rate_hz / 2.0)
      throw InvalidCutoff("cutoff must lie in (0, fs/2)");
    const double warped = std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
    // Butterworth prototype pole pairs for order 4: damping cos(pi/8), cos(3pi/8).
    for (double zeta : {std::cos(std::numbers::pi / 8.0), std::cos(3.0 * std::numbers::pi / 8.0)}) {
      // analog high-pass section s^2 / (s^2 + 2*zeta*w*s + w^2), bilinear with s=(1-z^-1)/(1+z^-1)
      const double b = 2.0 * zeta * warped;
      const double c = warped * warped;
      const double norm = 1.0 + b + c;
      sections_.push_back({1.0 / norm, -2.0 / norm, 1.0 / norm, (2.0 * c - 2.0) / norm,
                           (1.0 - b + c) / norm});
    }
  }

  const std::vector<Biquad>& sections() const { return sections_; }
  double cutoff_hz() const { return cutoff_hz_; }
  double sample_rate_hz() const { return sample_rate_hz_; }

  /// Single-pass magnitude response at `freq_hz`, in dB.
  double response_db(double freq_hz) const {
    const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz_;
    const std::complex<double> z1 = std::polar(1.0, -w);
    const std::complex<double> z2 = z1 * z1;
    double mag = 1.0;
    for (const auto& s : sections_) {
      mag *= std::abs(s.b0 + s.b1 * z1 + s.b2 * z2) / std::abs(1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return 20.0 * std::log10(mag);
  }

  /// Samples needed before the zero-phase output is trustworthy; inputs at or
  /// below this length are rejected.
  std::int64_t warmup_samples() const { return 3 * 5; }

  /// Zero-phase (forward-backward) filtering of one channel. Edges are
  /// extended by odd reflection and each pass starts from the steady state
  /// matching its first sample, which maps constants to exactly zero.
  std::vector<double> filtfilt(const std::vector<double>& x) const {
    const auto n = static_cast<std::int64_t>(x.size());
    const std::int64_t pad = warmup_samples();
    if (n <= pad) throw SignalTooShort("need more than " + std::to_string(pad) + " samples");

    std::vector<double> ext(static_cast<std::size_t>(n + 2 * pad));
    for (std::int64_t i = 0; i < pad; ++i)
      ext[static_cast<std::size_t>(i)] = 2.0 * x[0] - x[static_cast<std::size_t>(pad - i)];
    std::copy(x.begin(), x.end(), ext.begin() + pad);
    for (std::int64_t i = 0; i < pad; ++i)
      ext[static_cast<std::size_t>(n + pad + i)] =
          2.0 * x[static_cast<std::size_t>(n - 1)] - x[static_cast<std::size_t>(n - 2 - i)];

    forward_pass(ext);
    std::reverse(ext.begin(), ext.end());
    forward_pass(ext);
    std::reverse(ext.begin(), ext.end());

    return {ext.begin() + pad, ext.begin() + pad + n};
  }

 private:
  void forward_pass(std::vector<double>& x) const {
    for (const auto& s : sections_) {
      // steady-state initial conditions for a constant input equal to x[0]
      const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
      double z1 = (dc - s.b0) * x[0];
      double z2 = (s.b2 - s.a2 * dc) * x[0];
      for (auto& v : x) {
        const double in = v;
        const double out = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * out + z2;
        z2 = s.b2 * in - s.a2 * out;
        v = out;
      }
    }
  }

  double cutoff_hz_;
  double sample_rate_hz_;
  std::vector<Biquad> sections_;
};

/// Filters each electrode column of a row-major [n x channels] matrix
/// independently; the pre/post behaviour matches HighpassFilter::filtfilt.
inline std::vector<float> highpass(const std::vector<float>& samples, std::int64_t n_channels,
                                   double sample_rate_hz, double cutoff_hz) {
  if (n_channels <= 0) throw ShapeMismatch("highpass needs at least one channel");
  const auto n = static_cast<std::int64_t>(samples.size()) / n_channels;
  HighpassFilter filt(cutoff_hz, sample_rate_hz);
  std::vector<float> out(samples.size());
  std::vector<double> column(static_cast<std::size_t>(n));
  for (std::int64_t c = 0; c < n_channels; ++c) {
    for (std::int64_t i = 0; i < n; ++i)
      column[static_cast<std::size_t>(i)] = samples[static_cast<std::size_t>(i * n_channels + c)];
    auto filtered = filt.filtfilt(column);
    for (std::int64_t i = 0; i < n; ++i)
      out[static_cast<std::size_t>(i * n_channels + c)] =
          static_cast<float>(filtered[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace eegmesh
