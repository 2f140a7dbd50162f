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

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "prvq/binary_io.hpp"
#include "prvq/error.hpp"
#include "prvq/signal.hpp"

using namespace prvq;
using namespace prvq::signal;

namespace {

AudioBuffer sine(double hz, double amp, double seconds, int sr = 22050) {
  AudioBuffer a;
  a.sample_rate = sr;
  a.samples.resize(std::size_t(seconds * sr));
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    a.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * double(i) / sr);
  }
  return a;
}

std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                                    std::uint32_t rate, const std::vector<std::uint8_t>& payload) {
  io::ByteWriter w;
  w.put_string("RIFF");
  w.put<std::uint32_t>(36 + std::uint32_t(payload.size()));
  w.put_string("WAVE");
  w.put_string("fmt ");
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(format);
  w.put<std::uint16_t>(channels);
  w.put<std::uint32_t>(rate);
  w.put<std::uint32_t>(rate * channels * bits / 8);
  w.put<std::uint16_t>(std::uint16_t(channels * bits / 8));
  w.put<std::uint16_t>(bits);
  w.put_string("data");
  w.put<std::uint32_t>(std::uint32_t(payload.size()));
  w.put_bytes(payload);
  return w.take();
}

}  // namespace

TEST(Wav, SilenceDecodesToZeros) {
  std::vector<std::uint8_t> payload(16000 * 2, 0);
  const auto audio = decode_wav(wav_bytes(1, 1, 16, 16000, payload));
  EXPECT_EQ(audio.sample_rate, 16000);
  ASSERT_EQ(audio.samples.size(), 16000u);
  for (double s : audio.samples) EXPECT_EQ(s, 0.0);
}

TEST(Wav, FullScaleNormalization) {
  io::ByteWriter p;
  p.put<std::int16_t>(32767);
  p.put<std::int16_t>(-32768);
  const auto audio = decode_wav(wav_bytes(1, 1, 16, 22050, p.bytes()));
  EXPECT_EQ(audio.samples[0], 32767.0 / 32768.0);
  EXPECT_EQ(audio.samples[1], -1.0);
}

TEST(Wav, StereoCollapsesToMono) {
  io::ByteWriter p;
  for (int i = 0; i < 10; ++i) {
    p.put<float>(0.5f);
    p.put<float>(-0.5f);
  }
  const auto audio = decode_wav(wav_bytes(3, 2, 32, 22050, p.bytes()));
  ASSERT_EQ(audio.samples.size(), 10u);
  for (double s : audio.samples) EXPECT_EQ(s, 0.0);
}

TEST(Wav, MalformedHeaderReportsOffset) {
  auto bytes = wav_bytes(1, 1, 16, 16000, std::vector<std::uint8_t>(8, 0));
  bytes[8] = 'X';
  try {
    decode_wav(bytes);
    FAIL() << "expected DecodeError";
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + 6);
  EXPECT_THROW(decode_wav(truncated), DecodeError);
}

TEST(Wav, UnsupportedCodecRejected) {
  EXPECT_THROW(decode_wav(wav_bytes(1, 1, 8, 16000, std::vector<std::uint8_t>(4, 0))), DecodeError);
}

TEST(Wav, EncodeDecodeRoundTrip) {
  const auto a = sine(300.0, 0.4, 0.05);
  const auto f = decode_wav(encode_wav(a, WavEncoding::kFloat32));
  const auto p = decode_wav(encode_wav(a, WavEncoding::kPcm16));
  ASSERT_EQ(f.samples.size(), a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_NEAR(f.samples[i], a.samples[i], 1e-7);
    EXPECT_NEAR(p.samples[i], a.samples[i], 1.0 / 32768.0);
  }
}

TEST(MelSpectrogram, FrameCountAndZeroSignal) {
  FeatureConfig cfg;
  AudioBuffer zero;
  zero.samples.assign(5000, 0.0);
  const auto mel = mel_spectrogram(zero, cfg);
  EXPECT_EQ(mel.frames(), 1u + (5000u - 1024u) / 256u);
  EXPECT_EQ(mel.bands(), 80u);
  for (double v : mel.values.values()) EXPECT_EQ(v, std::log(1e-5));
}

TEST(MelSpectrogram, ShortAudioIsSizeError) {
  AudioBuffer a;
  a.samples.assign(1000, 0.0);
  EXPECT_THROW(mel_spectrogram(a, FeatureConfig{}), ShapeError);
}

TEST(MelSpectrogram, ToneLandsInOracleBand) {
  FeatureConfig cfg;
  const auto audio = sine(440.0, 0.5, 0.2);
  const auto mel = mel_spectrogram(audio, cfg);

  // Oracle: naive DFT of frame 3, peak bin, band with the largest filter response.
  const int n = cfg.n_fft;
  const auto window = hann_window(n);
  const std::size_t off = 3 * std::size_t(cfg.hop_length);
  std::vector<double> mag(std::size_t(n / 2 + 1));
  for (int k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += audio.samples[off + i] * window[i] * std::polar(1.0, -2.0 * std::numbers::pi * k * i / n);
    }
    mag[k] = std::abs(acc);
  }
  const Tensor fb = mel_filterbank(cfg.sample_rate, n, cfg.n_mels);
  std::size_t oracle_band = 0;
  double best = -1.0;
  for (std::size_t m = 0; m < fb.rows(); ++m) {
    double e = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) e += fb(m, k) * mag[k];
    if (e > best) {
      best = e;
      oracle_band = m;
    }
  }
  for (std::size_t t = 0; t < mel.frames(); ++t) {
    const auto row = mel.values.row(t);
    const auto argmax = std::size_t(std::max_element(row.begin(), row.end()) - row.begin());
    EXPECT_EQ(argmax, oracle_band) << "frame " << t;
  }
  // The oracle band's triangle covers 440 Hz.
  EXPECT_GT(fb(oracle_band, std::size_t(std::lround(440.0 * n / cfg.sample_rate))), 0.0);
}

TEST(MelSpectrogram, DoublingAmplitudeAddsLn2) {
  FeatureConfig cfg;
  const auto a = mel_spectrogram(sine(440.0, 0.2, 0.2), cfg);
  const auto b = mel_spectrogram(sine(440.0, 0.4, 0.2), cfg);
  const auto row = a.values.row(2);
  const auto peak = std::size_t(std::max_element(row.begin(), row.end()) - row.begin());
  EXPECT_NEAR(b.values(2, peak) - a.values(2, peak), std::log(2.0), 1e-9);
}

TEST(MelSpectrogram, Deterministic) {
  FeatureConfig cfg;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.1);
  AudioBuffer a;
  a.samples.resize(8000);
  for (auto& s : a.samples) s = g(rng);
  EXPECT_EQ(mel_spectrogram(a, cfg).values, mel_spectrogram(a, cfg).values);
}

TEST(MelFilterbank, TrianglesAreAreaNormalized) {
  const Tensor fb = mel_filterbank(22050, 1024, 80);
  const double bin_hz = 22050.0 / 1024.0;
  for (std::size_t m = 20; m < fb.rows(); ++m) {
    double area = 0.0;
    for (std::size_t k = 0; k < fb.cols(); ++k) area += fb(m, k) * bin_hz;
    EXPECT_NEAR(area, 1.0, 0.05) << "band " << m;
  }
}

TEST(InvertMel, PreservesToneF0) {
  FeatureConfig cfg;
  const auto mel = mel_spectrogram(sine(220.0, 0.5, 0.6), cfg);
  const auto audio = invert_mel(mel, cfg.griffin_lim_iterations);
  EXPECT_EQ(audio.samples.size(), (mel.frames() - 1) * 256 + 1024);
  const auto contour = estimate_f0(audio, 50.0, 600.0);
  const auto f0 = mean_voiced_f0(contour);
  ASSERT_TRUE(f0.has_value());
  EXPECT_NEAR(*f0, 220.0, 0.03 * 220.0);
  EXPECT_GT(contour.voiced_count(), contour.size() / 2);
}

TEST(InvertMel, FloorMelIsNearSilent) {
  MelSpectrogram mel;
  mel.values = Tensor(30, 80, std::log(1e-5));
  const auto audio = invert_mel(mel, 10);
  double acc = 0.0;
  for (double s : audio.samples) acc += s * s;
  EXPECT_LT(std::sqrt(acc / double(audio.samples.size())), 1e-3);
}

TEST(InvertMel, SpectralConvergenceNonIncreasing) {
  FeatureConfig cfg;
  AudioBuffer a = sine(180.0, 0.3, 0.4);
  const auto b = sine(530.0, 0.2, 0.4);
  for (std::size_t i = 0; i < a.samples.size(); ++i) a.samples[i] += b.samples[i];
  std::vector<double> trace;
  invert_mel(mel_spectrogram(a, cfg), 40, &trace);
  ASSERT_EQ(trace.size(), 40u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] * (1.0 + 1e-9));
  EXPECT_LT(trace.back(), trace.front());
}

TEST(EstimateF0, PureTone) {
  const auto contour = estimate_f0(sine(220.0, 0.5, 0.5), 50.0, 600.0);
  ASSERT_GT(contour.size(), 0u);
  for (std::size_t t = 0; t < contour.size(); ++t) {
    EXPECT_TRUE(contour.voiced[t]);
    EXPECT_NEAR(contour.f0[t], 220.0, 2.0);
  }
}

TEST(EstimateF0, LowLevelNoiseMostlyUnvoiced) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.01);
  AudioBuffer a;
  a.samples.resize(22050);
  for (auto& s : a.samples) s = g(rng);
  const auto contour = estimate_f0(a, 50.0, 600.0);
  EXPECT_GT(contour.size() - contour.voiced_count(), contour.size() / 2);
}

TEST(EstimateF0, SilenceAllUnvoiced) {
  AudioBuffer a;
  a.samples.assign(8000, 0.0);
  const auto contour = estimate_f0(a, 50.0, 600.0);
  EXPECT_EQ(contour.voiced_count(), 0u);
  for (double f : contour.f0) EXPECT_EQ(f, 0.0);
}

TEST(EstimateF0, RejectsBadRange) {
  AudioBuffer a;
  a.samples.assign(4000, 0.0);
  EXPECT_THROW(estimate_f0(a, 300.0, 200.0), ContractError);
}

TEST(FrameRms, ConstantSineAndZero) {
  AudioBuffer c;
  c.samples.assign(4096, 0.3);
  const auto rc = frame_rms(c, 256, 1024);
  EXPECT_EQ(rc.size(), FeatureConfig{}.frames_for(4096));
  for (double v : rc) EXPECT_NEAR(v, 0.3, 1e-12);

  const auto rs = frame_rms(sine(1000.0, 0.8, 0.5), 256, 4410);
  for (double v : rs) EXPECT_NEAR(v, 0.8 / std::sqrt(2.0), 2e-3);

  AudioBuffer z;
  z.samples.assign(2048, 0.0);
  for (double v : frame_rms(z, 256, 1024)) EXPECT_EQ(v, 0.0);
}

TEST(FrameRms, NonNegativeAndLinearInAmplitude) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    AudioBuffer a;
    a.samples.resize(3000);
    for (auto& s : a.samples) s = 0.5 * u(rng);
    const double k = 0.1 + std::abs(u(rng));
    AudioBuffer b = a;
    for (auto& s : b.samples) s *= k;
    const auto ra = frame_rms(a, 128, 512);
    const auto rb = frame_rms(b, 128, 512);
    for (std::size_t i = 0; i < ra.size(); ++i) {
      EXPECT_GE(ra[i], 0.0);
      EXPECT_NEAR(rb[i], k * ra[i], 1e-12);
    }
  }
}

TEST(NormalizeContour, ConstantAffineAndAlternating) {
  PitchContour c;
  c.f0 = {200, 200, 0, 200};
  c.voiced = {true, true, false, true};
  for (double v : normalize_contour(c).f0) EXPECT_EQ(v, 0.0);

  PitchContour alt;
  alt.f0 = {100, 200, 100, 200};
  alt.voiced = {true, true, true, true};
  const auto n = normalize_contour(alt);
  EXPECT_DOUBLE_EQ(n.f0[0], -1.0);
  EXPECT_DOUBLE_EQ(n.f0[1], 1.0);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(80.0, 300.0);
  PitchContour x;
  for (int i = 0; i < 50; ++i) {
    const bool v = i % 7 != 0;
    x.voiced.push_back(v);
    x.f0.push_back(v ? u(rng) : 0.0);
  }
  PitchContour y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y.voiced[i]) y.f0[i] = 2.0 * y.f0[i] + 50.0;
  }
  const auto nx = normalize_contour(x), ny = normalize_contour(y);
  for (std::size_t i = 0; i < nx.size(); ++i) EXPECT_NEAR(nx.f0[i], ny.f0[i], 1e-12);
}

TEST(NormalizeContour, NoVoicedFramesIsError) {
  PitchContour c;
  c.f0 = {0, 0};
  c.voiced = {false, false};
  EXPECT_THROW(normalize_contour(c), ContractError);
}
