// Copyright 2026 The prvq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prvq/error.hpp"
#include "prvq/signal.hpp"

namespace prvq::signal {

namespace {

// F0 of one frame, or 0 when unvoiced.
double yin_frame(std::span<const double> x, int sample_rate, int tau_min, int tau_max,
                 double threshold, std::vector<double>& diff) {
  const std::size_t width = x.size() - std::size_t(tau_max);
  double energy = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) energy += x[j] * x[j];
  if (energy < 1e-12 * double(x.size())) return 0.0;

  diff.assign(std::size_t(tau_max) + 2, 0.0);
  for (int tau = 1; tau <= tau_max; ++tau) {
    double d = 0.0;
    const double* a = x.data();
    const double* b = x.data() + tau;
    for (std::size_t j = 0; j < width; ++j) {
      const double e = a[j] - b[j];
      d += e * e;
    }
    diff[tau] = d;
  }
  // Cumulative mean normalised difference.
  double running = 0.0;
  diff[0] = 1.0;
  for (int tau = 1; tau <= tau_max; ++tau) {
    running += diff[tau];
    diff[tau] = running > 0.0 ? diff[tau] * tau / running : 1.0;
  }

  int best = -1;
  for (int tau = tau_min; tau <= tau_max; ++tau) {
    if (diff[tau] < threshold) {
      while (tau + 1 <= tau_max && diff[tau + 1] < diff[tau]) ++tau;
      best = tau;
      break;
    }
  }
  if (best < 0) return 0.0;

  double refined = best;
  if (best > 1 && best < tau_max) {
    const double l = diff[best - 1], c = diff[best], r = diff[best + 1];
    const double denom = l - 2.0 * c + r;
    if (denom > 0.0) refined = best + 0.5 * (l - r) / denom;
  }
  return double(sample_rate) / refined;
}

}  // namespace

std::size_t PitchContour::voiced_count() const {
  return std::size_t(std::count(voiced.begin(), voiced.end(), true));
}

PitchContour estimate_f0(const AudioBuffer& audio, const F0Config& cfg) {
  audio.validate();
  if (!(cfg.f_min > 0.0 && cfg.f_min < cfg.f_max && cfg.f_max < audio.sample_rate / 2.0)) {
    throw ContractError("estimate_f0: need 0 < f_min < f_max < sample_rate/2");
  }
  const int tau_max = std::min(int(std::floor(audio.sample_rate / cfg.f_min)), cfg.frame_length / 2);
  const int tau_min = std::max(2, int(std::floor(audio.sample_rate / cfg.f_max)));
  if (tau_min >= tau_max) throw ContractError("estimate_f0: frame too short for f_min");

  PitchContour out;
  const std::size_t n = audio.samples.size();
  if (n < std::size_t(cfg.frame_length)) return out;
  const std::size_t frames = 1 + (n - std::size_t(cfg.frame_length)) / std::size_t(cfg.hop);
  out.f0.assign(frames, 0.0);
  out.voiced.assign(frames, false);
  std::vector<double> scratch;
  const std::span<const double> x(audio.samples);
  for (std::size_t t = 0; t < frames; ++t) {
    const double f0 = yin_frame(x.subspan(t * std::size_t(cfg.hop), std::size_t(cfg.frame_length)),
                                audio.sample_rate, tau_min, tau_max, cfg.threshold, scratch);
    if (f0 >= cfg.f_min && f0 <= cfg.f_max) {
      out.f0[t] = f0;
      out.voiced[t] = true;
    }
  }
  return out;
}

PitchContour estimate_f0(const AudioBuffer& audio, double f_min, double f_max) {
  F0Config cfg;
  cfg.f_min = f_min;
  cfg.f_max = f_max;
  return estimate_f0(audio, cfg);
}

std::vector<double> frame_rms(const AudioBuffer& audio, int hop, int win) {
  if (win < 1 || hop < 1) throw ContractError("frame_rms: hop and win must be >= 1");
  const std::size_t n = audio.samples.size();
  if (n < std::size_t(win)) return {};
  const std::size_t frames = 1 + (n - std::size_t(win)) / std::size_t(hop);
  std::vector<double> out(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (int i = 0; i < win; ++i) {
      const double s = audio.samples[t * std::size_t(hop) + std::size_t(i)];
      acc += s * s;
    }
    out[t] = std::sqrt(acc / win);
  }
  return out;
}

PitchContour normalize_contour(const PitchContour& contour) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < contour.size(); ++t) {
    if (contour.voiced[t]) {
      sum += contour.f0[t];
      ++count;
    }
  }
  if (count == 0) throw ContractError("normalize_contour: contour has no voiced frames");
  const double mean = sum / double(count);
  double var = 0.0;
  for (std::size_t t = 0; t < contour.size(); ++t) {
    if (contour.voiced[t]) var += (contour.f0[t] - mean) * (contour.f0[t] - mean);
  }
  const double sd = std::max(std::sqrt(var / double(count)), 1e-8);
  PitchContour out = contour;
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (out.voiced[t]) out.f0[t] = (contour.f0[t] - mean) / sd;
  }
  return out;
}

std::optional<double> mean_voiced_f0(const PitchContour& contour) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < contour.size(); ++t) {
    if (contour.voiced[t]) {
      sum += contour.f0[t];
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / double(count);
}

}  // namespace prvq::signal
