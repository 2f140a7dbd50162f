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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prvq/error.hpp"
#include "prvq/signal.hpp"

namespace prvq::corpus {

/// Symbol <-> ID bijection. ID 0 is reserved for padding.
class PhonemeVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr const char* kPadSymbol = "<pad>";

  PhonemeVocab();
  /// Rebuilds from an ID-ordered symbol list whose first entry is the pad symbol.
  static PhonemeVocab from_symbols(const std::vector<std::string>& symbols);

  /// Existing ID, or a new one appended at the end.
  int add(const std::string& symbol);
  /// Throws DataError for unknown symbols.
  int id(const std::string& symbol) const;
  std::optional<int> find(const std::string& symbol) const;
  const std::string& symbol(int id) const;
  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  friend bool operator==(const PhonemeVocab& a, const PhonemeVocab& b) { return a.symbols_ == b.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> ids_;
};

struct Utterance {
  std::string id;
  int speaker_id = 0;
  std::vector<int> phonemes;
  std::vector<int> durations;
  signal::MelSpectrogram mel;
  std::optional<std::string> transcript;

  std::size_t num_phonemes() const { return phonemes.size(); }
  std::size_t num_frames() const { return mel.frames(); }
  /// Checks lengths, positive durations, sum(durations) == frames and IDs < vocab_size.
  void validate(std::size_t vocab_size) const;
};

/// Failure in one manifest record; the message names the record and field.
class RecordError : public DataError {
 public:
  RecordError(std::size_t record, const std::string& field, const std::string& what);
  std::size_t record() const { return record_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t record_;
  std::string field_;
};

struct UtteranceDescriptor {
  std::size_t record = 0;
  std::string id;
  std::filesystem::path audio;
  std::string speaker;
  int speaker_id = 0;
  std::vector<int> phonemes;
  std::vector<int> durations;
  std::optional<std::string> transcript;
};

struct Manifest {
  PhonemeVocab vocab;
  std::vector<std::string> speakers;  // index = speaker ID
  std::vector<UtteranceDescriptor> records;
};

struct ManifestOptions {
  /// When set, symbols and speakers must already be known (e.g. from a checkpoint).
  const PhonemeVocab* fixed_vocab = nullptr;
  const std::vector<std::string>* fixed_speakers = nullptr;
  bool require_audio = true;
};

/// Parses a JSON-lines manifest. Audio paths are resolved against the manifest's directory.
Manifest parse_manifest(const std::filesystem::path& path, const ManifestOptions& opts = {});
Manifest parse_manifest_text(const std::string& text, const std::filesystem::path& base_dir,
                             const ManifestOptions& opts = {});

/// Absorbs |sum(d) - frames| <= tolerance into the last duration.
std::vector<int> reconcile_durations(std::vector<int> durations, std::size_t frames, int tolerance = 2);

enum class CacheMode { kReadWrite, kReadOnly };

/// Mel features for one audio file, read from `cache_dir` when given. Misses
/// are computed and, in kReadWrite mode, stored.
signal::MelSpectrogram cached_features(const std::filesystem::path& audio, const signal::FeatureConfig& cfg,
                                       const std::optional<std::filesystem::path>& cache_dir,
                                       CacheMode mode = CacheMode::kReadWrite);

/// Self-describing binary container for a mel matrix.
std::vector<std::uint8_t> encode_mel(const signal::MelSpectrogram& mel, std::uint64_t key);
signal::MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes, std::uint64_t expected_key);

/// Loads features for every record and reconciles durations.
std::vector<Utterance> load_utterances(const Manifest& m, const signal::FeatureConfig& cfg,
                                       const std::optional<std::filesystem::path>& cache_dir,
                                       int tolerance = 2, CacheMode mode = CacheMode::kReadWrite);

struct PadTo {
  std::size_t phonemes = 0;
  std::size_t frames = 0;
};

struct Batch {
  std::vector<std::string> ids;
  std::vector<int> speaker_ids;
  std::vector<std::vector<int>> phonemes;   // B x N_max, PAD = 0
  std::vector<std::vector<int>> durations;  // B x N_max, padding 0
  std::vector<Tensor> mels;                 // B of T_max x M, padding 0
  std::vector<std::vector<bool>> phoneme_mask;
  std::vector<std::vector<bool>> frame_mask;
  std::vector<std::optional<std::string>> transcripts;
  int hop_length = 256;
  int n_fft = 1024;
  int sample_rate = 22050;

  std::size_t size() const { return ids.size(); }
  std::size_t max_phonemes() const { return phonemes.empty() ? 0 : phonemes.front().size(); }
  std::size_t max_frames() const { return mels.empty() ? 0 : mels.front().rows(); }
};

Batch make_batch(const std::vector<Utterance>& utterances, std::optional<PadTo> pad_to = std::nullopt);
std::vector<Utterance> unbatch(const Batch& batch);

struct SynthSpec {
  int num_speakers = 2;
  int num_utterances = 32;
  int inventory = 8;
  int min_phonemes = 12;
  int max_phonemes = 20;
  int min_duration = 3;
  int max_duration = 7;
  /// Per-speaker F0 range in Hz; speakers beyond the list reuse it cyclically.
  std::vector<std::pair<double, double>> f0_ranges = {{100.0, 150.0}, {200.0, 300.0}};
  /// Relative per-segment amplitude spread (gain in [1 - s, 1 + s]).
  double amplitude_spread = 0.15;
  double level = 0.1;  // target segment RMS
  std::uint64_t seed = 1;
  signal::FeatureConfig features;

  void validate() const;
};

struct SynthCorpus {
  PhonemeVocab vocab;
  std::vector<std::string> speakers;
  std::vector<Utterance> utterances;
  std::vector<signal::AudioBuffer> audio;
  /// Per-utterance, per-segment relative pitch u in [0, 1) and gain.
  std::vector<std::vector<double>> pitch;
  std::vector<std::vector<double>> gain;
};

SynthCorpus synth_corpus(const SynthSpec& spec);

/// Writes float32 WAVs and `manifest.jsonl` under `dir`; returns the manifest path.
std::filesystem::path write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace prvq::corpus
