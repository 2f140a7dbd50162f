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
#include <Eigen/SVD>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "prvq/binary_io.hpp"
#include "prvq/error.hpp"
#include "prvq/signal.hpp"

namespace prvq::signal {

namespace {

using Complex = std::complex<double>;

// Half-spectrum real FFT of one windowed frame.
class FrameFft {
 public:
  explicit FrameFft(int n) : n_(n), frame_(std::size_t(n)) {
    fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  }

  const std::vector<Complex>& forward(std::span<const double> x, std::span<const double> window) {
    for (int i = 0; i < n_; ++i) frame_[i] = x[i] * window[i];
    fft_.fwd(spectrum_, frame_);
    return spectrum_;
  }

  const std::vector<double>& inverse(const std::vector<Complex>& spectrum) {
    fft_.inv(frame_, spectrum, n_);
    return frame_;
  }

 private:
  int n_;
  Eigen::FFT<double> fft_;
  std::vector<double> frame_;
  std::vector<Complex> spectrum_;
};

// Complex STFT, frames x (n_fft/2+1), no centring pad.
std::vector<std::vector<Complex>> stft(std::span<const double> x, int n_fft, int hop,
                                       std::size_t frames, const std::vector<double>& window,
                                       FrameFft& fft) {
  std::vector<std::vector<Complex>> out(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    out[t] = fft.forward(x.subspan(t * std::size_t(hop), std::size_t(n_fft)), window);
  }
  return out;
}

// Least-squares overlap-add inverse of a (possibly inconsistent) STFT.
std::vector<double> istft(const std::vector<std::vector<Complex>>& spec, int n_fft, int hop,
                          const std::vector<double>& window, FrameFft& fft) {
  const std::size_t frames = spec.size();
  const std::size_t len = (frames - 1) * std::size_t(hop) + std::size_t(n_fft);
  std::vector<double> y(len, 0.0), wsum(len, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto& frame = fft.inverse(spec[t]);
    const std::size_t off = t * std::size_t(hop);
    for (int i = 0; i < n_fft; ++i) {
      y[off + i] += frame[i] * window[i];
      wsum[off + i] += window[i] * window[i];
    }
  }
  // Floor the normaliser so the sparsely covered edges are not amplified by 1/w.
  const double floor = 0.1 * *std::max_element(wsum.begin(), wsum.end());
  for (std::size_t i = 0; i < len; ++i) y[i] /= std::max(wsum[i], floor);
  return y;
}

}  // namespace

void FeatureConfig::validate() const {
  if (sample_rate <= 0) throw ContractError("features.sample_rate must be positive");
  if (n_fft < 16) throw ContractError("features.n_fft must be >= 16");
  if (hop_length <= 0) throw ContractError("features.hop_length must be positive");
  if (n_mels <= 0 || n_mels > n_fft / 2) throw ContractError("features.n_mels out of range");
  if (!(log_floor > 0.0)) throw ContractError("features.log_floor must be positive");
  if (griffin_lim_iterations < 1) throw ContractError("features.griffin_lim_iterations must be >= 1");
  if (!(f0_min > 0.0 && f0_min < f0_max && f0_max < sample_rate / 2.0)) {
    throw ContractError("features: need 0 < f0_min < f0_max < sample_rate/2");
  }
}

std::uint64_t FeatureConfig::hash() const {
  std::ostringstream s;
  s.precision(17);
  s << sample_rate << '|' << n_fft << '|' << hop_length << '|' << n_mels << '|' << log_floor;
  return io::fnv1a64(s.str());
}

std::size_t FeatureConfig::frames_for(std::size_t num_samples) const {
  if (num_samples < std::size_t(n_fft)) return 0;
  return 1 + (num_samples - std::size_t(n_fft)) / std::size_t(hop_length);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  }
  return w;
}

Tensor mel_filterbank(int sample_rate, int n_fft, int n_mels) {
  const int bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(std::size_t(n_mels) + 2);
  for (int m = 0; m < n_mels + 2; ++m) {
    edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1));
  }
  Tensor fb(static_cast<std::size_t>(n_mels), static_cast<std::size_t>(bins));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = double(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f <= centre) {
        w = (f - lo) / (centre - lo);
      } else if (f > centre && f < hi) {
        w = (hi - f) / (hi - centre);
      }
      fb(m, k) = w * norm;
    }
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const AudioBuffer& audio, const FeatureConfig& cfg) {
  cfg.validate();
  audio.validate();
  if (audio.sample_rate != cfg.sample_rate) {
    throw ContractError("mel_spectrogram: audio at " + std::to_string(audio.sample_rate) +
                        " Hz, features configured for " + std::to_string(cfg.sample_rate) + " Hz");
  }
  const std::size_t frames = cfg.frames_for(audio.samples.size());
  if (frames == 0) {
    throw ShapeError("mel_spectrogram: " + std::to_string(audio.samples.size()) +
                     " samples is shorter than one window of " + std::to_string(cfg.n_fft));
  }
  const Tensor fb = mel_filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels);
  const auto window = hann_window(cfg.n_fft);
  const std::size_t bins = std::size_t(cfg.n_fft / 2 + 1);
  FrameFft fft(cfg.n_fft);

  MelSpectrogram mel;
  mel.hop_length = cfg.hop_length;
  mel.n_fft = cfg.n_fft;
  mel.sample_rate = cfg.sample_rate;
  mel.values = Tensor(frames, std::size_t(cfg.n_mels));
  Eigen::VectorXd mag(bins);
  const std::span<const double> x(audio.samples);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto& spec = fft.forward(x.subspan(t * std::size_t(cfg.hop_length), std::size_t(cfg.n_fft)), window);
    for (std::size_t k = 0; k < bins; ++k) mag[Eigen::Index(k)] = std::abs(spec[k]);
    const Eigen::VectorXd band = fb.map() * mag;
    for (int m = 0; m < cfg.n_mels; ++m) mel.values(t, m) = std::log(std::max(band[m], cfg.log_floor));
  }
  return mel;
}

constexpr int kNnlsIterations = 200;

AudioBuffer invert_mel(const MelSpectrogram& mel, int iterations, std::vector<double>* convergence) {
  if (iterations < 1) throw ContractError("invert_mel: iterations must be >= 1");
  if (mel.frames() == 0) throw ShapeError("invert_mel: empty mel");
  if (!mel.values.all_finite()) throw ContractError("invert_mel: non-finite mel values");
  const int n_fft = mel.n_fft;
  const int hop = mel.hop_length;
  const std::size_t frames = mel.frames();
  const std::size_t bins = std::size_t(n_fft / 2 + 1);

  const Tensor fb = mel_filterbank(mel.sample_rate, n_fft, int(mel.bands()));
  const Eigen::MatrixXd pinv = Eigen::MatrixXd(fb.map()).completeOrthogonalDecomposition().pseudoInverse();

  // Target magnitudes, frames x bins.
  std::vector<std::vector<double>> target(frames, std::vector<double>(bins));
  double target_norm = 0.0;
  const Eigen::MatrixXd F = fb.map();
  Eigen::MatrixXd B(F.rows(), static_cast<Eigen::Index>(frames));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t m = 0; m < mel.bands(); ++m) B(Eigen::Index(m), Eigen::Index(t)) = std::exp(mel.values(t, m));
  }
  // Non-negative least squares by projected gradient, started from the clamped pseudo-inverse.
  Eigen::MatrixXd S = (pinv * B).cwiseMax(0.0);
  const double lipschitz = std::pow(Eigen::JacobiSVD<Eigen::MatrixXd>(F).singularValues()(0), 2);
  for (int it = 0; it < kNnlsIterations; ++it) S = (S - (F.transpose() * (F * S - B)) / lipschitz).cwiseMax(0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k) {
      target[t][k] = S(Eigen::Index(k), Eigen::Index(t));
      target_norm += target[t][k] * target[t][k];
    }
  }
  target_norm = std::sqrt(target_norm);

  // Deterministic random initial phase.
  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<std::vector<Complex>> spec(frames, std::vector<Complex>(bins));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k) spec[t][k] = std::polar(target[t][k], phase(rng));
  }

  const auto window = hann_window(n_fft);
  FrameFft fft(n_fft);
  if (convergence) convergence->clear();
  std::vector<double> y;
  for (int it = 0; it < iterations; ++it) {
    y = istft(spec, n_fft, hop, window, fft);
    auto rebuilt = stft(y, n_fft, hop, frames, window, fft);
    double err = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < bins; ++k) {
        const double a = std::abs(rebuilt[t][k]);
        const double d = target[t][k] - a;
        err += d * d;
        spec[t][k] = a > 1e-300 ? rebuilt[t][k] * (target[t][k] / a) : Complex(target[t][k], 0.0);
      }
    }
    if (convergence) convergence->push_back(target_norm > 0.0 ? std::sqrt(err) / target_norm : 0.0);
  }
  y = istft(spec, n_fft, hop, window, fft);

  AudioBuffer out;
  out.sample_rate = mel.sample_rate;
  out.samples = std::move(y);
  return out;
}

}  // namespace prvq::signal
