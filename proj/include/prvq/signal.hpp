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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "prvq/tensor.hpp"

/// Audio I/O and the DSP used around the codec: log-mel analysis, approximate
/// mel inversion (pseudo-inverse + Griffin-Lim), YIN pitch tracking and RMS.
namespace prvq::signal {

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 22050;

  /// Throws ContractError if the rate is not positive or a sample is not finite.
  void validate() const;
};

struct FeatureConfig {
  int sample_rate = 22050;
  int n_fft = 1024;
  int hop_length = 256;
  int n_mels = 80;
  double log_floor = 1e-5;
  int griffin_lim_iterations = 60;
  double f0_min = 50.0;
  double f0_max = 600.0;
  double yin_threshold = 0.15;

  void validate() const;
  /// Stable 64-bit digest of the fields that shape mel features; keys the feature cache.
  std::uint64_t hash() const;
  /// Frames produced for `num_samples` samples (0 if shorter than one window).
  std::size_t frames_for(std::size_t num_samples) const;
};

/// T frames x M bands of natural-log mel amplitudes.
struct MelSpectrogram {
  Tensor values;
  int hop_length = 256;
  int n_fft = 1024;
  int sample_rate = 22050;

  std::size_t frames() const noexcept { return values.rows(); }
  std::size_t bands() const noexcept { return values.cols(); }
};

/// Per-frame F0 in Hz; 0 marks an unvoiced frame.
struct PitchContour {
  std::vector<double> f0;
  std::vector<bool> voiced;

  std::size_t size() const noexcept { return f0.size(); }
  std::size_t voiced_count() const;
};

enum class WavEncoding { kPcm16, kFloat32 };

AudioBuffer load_wav(const std::filesystem::path& path);
/// Decodes an in-memory RIFF/WAVE image.
AudioBuffer decode_wav(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding enc = WavEncoding::kPcm16);
void save_wav(const std::filesystem::path& path, const AudioBuffer& audio,
              WavEncoding enc = WavEncoding::kPcm16);

/// Triangular, area-normalised mel filterbank over [0, sr/2]: n_mels x (n_fft/2 + 1).
Tensor mel_filterbank(int sample_rate, int n_fft, int n_mels);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Periodic Hann window.
std::vector<double> hann_window(int length);

MelSpectrogram mel_spectrogram(const AudioBuffer& audio, const FeatureConfig& cfg);

/// Mel -> linear magnitude by non-negative least squares against the filterbank
/// (projected gradient from the clamped pseudo-inverse), then
/// `iterations` rounds of Griffin-Lim. When `convergence` is given it receives
/// the spectral convergence ||S - |STFT(y_k)||| / ||S|| after each round.
AudioBuffer invert_mel(const MelSpectrogram& mel, int iterations,
                       std::vector<double>* convergence = nullptr);

struct F0Config {
  double f_min = 50.0;
  double f_max = 600.0;
  double threshold = 0.15;
  int frame_length = 1024;
  int hop = 256;
};

/// YIN: cumulative-mean-normalised difference, absolute threshold, parabolic
/// refinement. Frames whose normalised minimum stays above the threshold are unvoiced.
PitchContour estimate_f0(const AudioBuffer& audio, const F0Config& cfg);
PitchContour estimate_f0(const AudioBuffer& audio, double f_min, double f_max);

std::vector<double> frame_rms(const AudioBuffer& audio, int hop, int win);

/// Zero-mean, unit-variance voiced values; unvoiced frames keep 0.
PitchContour normalize_contour(const PitchContour& contour);

/// Mean F0 over voiced frames, if any.
std::optional<double> mean_voiced_f0(const PitchContour& contour);

}  // namespace prvq::signal
