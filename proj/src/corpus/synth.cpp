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
#include <cstdio>
#include <numbers>

#include <json.hpp>

#include "prvq/binary_io.hpp"
#include "prvq/corpus.hpp"
#include "prvq/error.hpp"
#include "prvq/random.hpp"

namespace prvq::corpus {

namespace {

// Three-formant vowel-like envelope with a gentle tilt.
struct Envelope {
  double f[3];
  double bw[3];

  double operator()(double hz) const {
    static constexpr double kWeight[3] = {1.0, 0.6, 0.3};
    double a = 0.02 / (1.0 + hz / 1000.0);
    for (int i = 0; i < 3; ++i) {
      const double z = (hz - f[i]) / bw[i];
      a += kWeight[i] * std::exp(-0.5 * z * z);
    }
    return a;
  }
};

constexpr double kMaxHarmonicHz = 7000.0;

std::string numbered(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

}  // namespace

void SynthSpec::validate() const {
  if (num_speakers < 1 || num_utterances < 1 || inventory < 1) throw ContractError("synth: counts must be positive");
  if (min_phonemes < 1 || max_phonemes < min_phonemes) throw ContractError("synth: bad phoneme count range");
  if (min_duration < 1 || max_duration < min_duration) throw ContractError("synth: bad duration range");
  if (f0_ranges.empty()) throw ContractError("synth: need at least one F0 range");
  for (auto [lo, hi] : f0_ranges) {
    if (!(lo > 0.0 && hi > lo && hi < features.sample_rate / 4.0)) throw ContractError("synth: bad F0 range");
  }
  if (!(amplitude_spread >= 0.0 && amplitude_spread < 1.0)) throw ContractError("synth: amplitude_spread must be in [0, 1)");
  if (!(level > 0.0 && level < 0.5)) throw ContractError("synth: level must be in (0, 0.5)");
  features.validate();
}

SynthCorpus synth_corpus(const SynthSpec& spec) {
  spec.validate();
  rnd::Engine rng(spec.seed);
  SynthCorpus c;
  for (int p = 0; p < spec.inventory; ++p) c.vocab.add(numbered("p", p, 2));
  for (int s = 0; s < spec.num_speakers; ++s) c.speakers.push_back(numbered("spk", s, 1));

  std::vector<Envelope> env(std::size_t(spec.inventory));
  for (auto& e : env) {
    e.f[0] = rnd::uniform(rng, 250.0, 850.0);
    e.f[1] = rnd::uniform(rng, 900.0, 2400.0);
    e.f[2] = rnd::uniform(rng, 2400.0, 3400.0);
    for (int i = 0; i < 3; ++i) e.bw[i] = 80.0 + 0.1 * e.f[i];
  }

  const auto& fc = spec.features;
  const double sr = fc.sample_rate;
  for (int u = 0; u < spec.num_utterances; ++u) {
    const int speaker = u % spec.num_speakers;
    const auto [f_lo, f_hi] = spec.f0_ranges[std::size_t(speaker) % spec.f0_ranges.size()];
    const int n = spec.min_phonemes + int(rnd::index(rng, std::size_t(spec.max_phonemes - spec.min_phonemes + 1)));

    Utterance utt;
    utt.id = numbered("utt", u, 3);
    utt.speaker_id = speaker;
    std::vector<double> pitch, gain;
    std::string text;
    for (int i = 0; i < n; ++i) {
      utt.phonemes.push_back(1 + int(rnd::index(rng, std::size_t(spec.inventory))));
      utt.durations.push_back(spec.min_duration +
                              int(rnd::index(rng, std::size_t(spec.max_duration - spec.min_duration + 1))));
      pitch.push_back(rnd::uniform01(rng));
      gain.push_back(rnd::uniform(rng, 1.0 - spec.amplitude_spread, 1.0 + spec.amplitude_spread));
      text += (i ? " " : "") + c.vocab.symbol(utt.phonemes.back());
    }
    utt.transcript = text;

    // Frame t spans [t*hop, t*hop + n_fft); segment i owns the frames whose
    // centres fall inside it, so mel frames == sum(durations) exactly.
    long frames = 0;
    for (int d : utt.durations) frames += d;
    const std::size_t len = std::size_t(fc.n_fft) + std::size_t(frames - 1) * std::size_t(fc.hop_length);
    signal::AudioBuffer audio;
    audio.sample_rate = fc.sample_rate;
    audio.samples.assign(len, 0.0);

    double phase = 0.0;
    long start_frame = 0;
    for (int i = 0; i < n; ++i) {
      const long end_frame = start_frame + utt.durations[std::size_t(i)];
      const long half = fc.n_fft / 2 - fc.hop_length / 2;
      const std::size_t s0 = i == 0 ? 0 : std::size_t(start_frame * fc.hop_length + half);
      const std::size_t s1 = i == n - 1 ? len : std::size_t(end_frame * fc.hop_length + half);
      start_frame = end_frame;

      const double f0 = f_lo + pitch[std::size_t(i)] * (f_hi - f_lo);
      const Envelope& e = env[std::size_t(utt.phonemes[std::size_t(i)] - 1)];
      std::vector<double> amp;
      double power = 0.0;
      for (int h = 1; h * f0 < std::min(kMaxHarmonicHz, sr / 2.0); ++h) {
        amp.push_back(e(h * f0));
        power += 0.5 * amp.back() * amp.back();
      }
      const double scale = spec.level * gain[std::size_t(i)] / std::sqrt(power);
      for (auto& a : amp) a *= scale;

      const double dphi = 2.0 * std::numbers::pi * f0 / sr;
      for (std::size_t s = s0; s < s1; ++s) {
        phase = std::fmod(phase + dphi, 2.0 * std::numbers::pi);
        // sin(h*phase) by the Chebyshev recurrence.
        const double c1 = 2.0 * std::cos(phase);
        double prev = 0.0, cur = std::sin(phase), acc = 0.0;
        for (double a : amp) {
          acc += a * cur;
          const double next = c1 * cur - prev;
          prev = cur;
          cur = next;
        }
        audio.samples[s] = acc;
      }
    }

    utt.mel = signal::mel_spectrogram(audio, fc);
    utt.validate(c.vocab.size());
    c.utterances.push_back(std::move(utt));
    c.audio.push_back(std::move(audio));
    c.pitch.push_back(std::move(pitch));
    c.gain.push_back(std::move(gain));
  }
  return c;
}

std::filesystem::path write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "wav");
  std::string lines;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const auto& u = corpus.utterances[i];
    const std::string rel = "wav/" + u.id + ".wav";
    io::write_file_atomic(dir / rel, signal::encode_wav(corpus.audio[i], signal::WavEncoding::kFloat32));
    std::string phones;
    for (int p : u.phonemes) phones += (phones.empty() ? "" : " ") + corpus.vocab.symbol(p);
    nlohmann::ordered_json j;
    j["id"] = u.id;
    j["audio"] = rel;
    j["speaker"] = corpus.speakers[std::size_t(u.speaker_id)];
    j["phones"] = phones;
    j["durations"] = u.durations;
    if (u.transcript) j["text"] = *u.transcript;
    lines += j.dump() + "\n";
  }
  const auto path = dir / "manifest.jsonl";
  io::write_text_atomic(path, lines);
  return path;
}

}  // namespace prvq::corpus
