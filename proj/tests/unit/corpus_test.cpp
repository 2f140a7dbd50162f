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

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include <unistd.h>

#include <gtest/gtest.h>

#include "prvq/binary_io.hpp"
#include "prvq/corpus.hpp"
#include "prvq/error.hpp"

using namespace prvq;
using namespace prvq::corpus;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            ("prvq_" + std::string(info->test_suite_name()) + "_" + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// A tone long enough for `frames` mel frames under the default config.
void write_tone(const fs::path& p, std::size_t frames) {
  signal::FeatureConfig cfg;
  signal::AudioBuffer a;
  a.samples.resize(std::size_t(cfg.n_fft) + (frames - 1) * std::size_t(cfg.hop_length));
  for (std::size_t i = 0; i < a.samples.size(); ++i) a.samples[i] = 0.2 * std::sin(0.05 * double(i));
  signal::save_wav(p, a, signal::WavEncoding::kFloat32);
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

Utterance random_utterance(std::mt19937_64& rng, int speaker) {
  std::uniform_int_distribution<int> len(1, 9), dur(1, 4), ph(1, 7);
  Utterance u;
  u.id = "u" + std::to_string(rng() % 1000);
  u.speaker_id = speaker;
  const int n = len(rng);
  int total = 0;
  for (int i = 0; i < n; ++i) {
    u.phonemes.push_back(ph(rng));
    u.durations.push_back(dur(rng));
    total += u.durations.back();
  }
  u.mel.values = Tensor(std::size_t(total), 5);
  for (auto& v : u.mel.values.values()) v = double(rng() % 1000) / 7.0 - 50.0;
  return u;
}

}  // namespace

TEST(Vocab, PadIsZeroAndReloadIsIdentical) {
  PhonemeVocab v;
  EXPECT_EQ(v.id("<pad>"), 0);
  EXPECT_EQ(v.add("aa"), 1);
  EXPECT_EQ(v.add("b"), 2);
  EXPECT_EQ(v.add("aa"), 1);
  const auto back = PhonemeVocab::from_symbols(v.symbols());
  EXPECT_EQ(back, v);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(back.id(v.symbol(i)), i);
  EXPECT_THROW(v.id("zz"), DataError);
  EXPECT_THROW(PhonemeVocab::from_symbols({"aa"}), DataError);
  EXPECT_THROW(PhonemeVocab::from_symbols({"<pad>", "a", "a"}), DataError);
}

TEST(Reconcile, Examples) {
  EXPECT_EQ(reconcile_durations({5, 5, 5}, 15), (std::vector<int>{5, 5, 5}));
  EXPECT_EQ(reconcile_durations({5, 5, 5}, 16), (std::vector<int>{5, 5, 6}));
  EXPECT_EQ(reconcile_durations({5, 5, 5}, 13), (std::vector<int>{5, 5, 3}));
  // Sum 11 -> 9 needs the last duration to become -1.
  EXPECT_THROW(reconcile_durations({5, 5, 1}, 9), ContractError);
  EXPECT_THROW(reconcile_durations({5, 5, 5}, 12), ContractError);
  EXPECT_THROW(reconcile_durations({5, 5, 5}, 14, 0), ContractError);
}

TEST(Manifest, AcceptsMatchingDurations) {
  TempDir d;
  write_tone(d.path() / "a.wav", 15);
  write_text(d.path() / "m.jsonl",
             R"({"audio": "a.wav", "speaker": "s1", "phones": "aa b aa", "durations": [5, 5, 5], "text": "hi"})" "\n");
  const auto m = parse_manifest(d.path() / "m.jsonl");
  ASSERT_EQ(m.records.size(), 1u);
  EXPECT_EQ(m.records[0].phonemes, (std::vector<int>{1, 2, 1}));
  EXPECT_EQ(m.records[0].id, "a");
  const auto utts = load_utterances(m, {}, std::nullopt);
  EXPECT_EQ(utts[0].num_frames(), 15u);
  EXPECT_EQ(utts[0].transcript, "hi");
  utts[0].validate(m.vocab.size());
}

TEST(Manifest, MismatchBeyondToleranceNamesRecordAndField) {
  TempDir d;
  write_tone(d.path() / "a.wav", 15);
  write_tone(d.path() / "b.wav", 15);
  write_text(d.path() / "m.jsonl",
             R"({"audio": "a.wav", "speaker": "s", "phones": "x", "durations": [15]})" "\n"
             R"({"audio": "b.wav", "speaker": "s", "phones": "x y", "durations": [6, 6]})" "\n");
  const auto m = parse_manifest(d.path() / "m.jsonl");
  try {
    load_utterances(m, {}, std::nullopt, 0);
    FAIL();
  } catch (const RecordError& e) {
    EXPECT_EQ(e.record(), 1u);
    EXPECT_EQ(e.field(), "durations");
  }
}

TEST(Manifest, SpeakerIdsInFirstAppearanceOrder) {
  TempDir d;
  write_tone(d.path() / "a.wav", 3);
  const std::vector<std::string> order = {"carol", "alice", "carol", "dave", "bob", "alice", "bob"};
  std::string text;
  for (const auto& s : order) text += R"({"audio": "a.wav", "speaker": ")" + s + R"(", "phones": "x", "durations": [3]})" "\n";
  write_text(d.path() / "m.jsonl", text);
  // Oracle: scan for first occurrences.
  std::map<std::string, int> expect;
  for (const auto& s : order) expect.try_emplace(s, int(expect.size()));
  const auto m = parse_manifest(d.path() / "m.jsonl");
  ASSERT_EQ(m.speakers.size(), 4u);
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(m.records[i].speaker_id, expect.at(order[i]));
  for (const auto& [name, id] : expect) EXPECT_EQ(m.speakers[std::size_t(id)], name);
}

TEST(Manifest, RecordErrors) {
  TempDir d;
  write_tone(d.path() / "a.wav", 3);
  auto err_of = [&](const std::string& text, ManifestOptions opts = {}) {
    write_text(d.path() / "m.jsonl", text);
    try {
      parse_manifest(d.path() / "m.jsonl", opts);
    } catch (const RecordError& e) {
      return std::make_pair(e.record(), e.field());
    }
    return std::make_pair(std::size_t(99), std::string("none"));
  };
  const std::string ok = R"({"audio": "a.wav", "speaker": "s", "phones": "x", "durations": [3]})" "\n";
  EXPECT_EQ(err_of(ok + R"({"audio": "missing.wav", "speaker": "s", "phones": "x", "durations": [3]})"),
            std::make_pair(std::size_t(1), std::string("audio")));
  EXPECT_EQ(err_of(ok + "\n" + ok + "{not json"), std::make_pair(std::size_t(2), std::string("json")));
  EXPECT_EQ(err_of(R"({"audio": "a.wav", "speaker": "s", "phones": "x y", "durations": [3]})"),
            std::make_pair(std::size_t(0), std::string("durations")));
  EXPECT_EQ(err_of(R"({"audio": "a.wav", "speaker": "s", "durations": [3]})"),
            std::make_pair(std::size_t(0), std::string("phones")));
  PhonemeVocab fixed;
  fixed.add("x");
  ManifestOptions opts;
  opts.fixed_vocab = &fixed;
  EXPECT_EQ(err_of(R"({"audio": "a.wav", "speaker": "s", "phones": "x q", "durations": [1, 2]})", opts),
            std::make_pair(std::size_t(0), std::string("phones")));
}

TEST(FeatureCache, WritesThenReuses) {
  TempDir d;
  write_tone(d.path() / "a.wav", 10);
  const auto cache = d.path() / "cache";
  signal::FeatureConfig cfg;
  const auto first = cached_features(d.path() / "a.wav", cfg, cache);
  ASSERT_EQ(std::distance(fs::directory_iterator(cache), fs::directory_iterator()), 1);
  const auto entry = fs::directory_iterator(cache)->path();
  EXPECT_EQ(entry.extension(), ".mel");
  const auto second = cached_features(d.path() / "a.wav", cfg, cache);
  EXPECT_EQ(first.values, second.values);

  // Damaged entries are recomputed.
  write_text(entry, "garbage");
  EXPECT_EQ(cached_features(d.path() / "a.wav", cfg, cache).values, first.values);

  // A different config keys a different entry.
  cfg.n_mels = 40;
  EXPECT_EQ(cached_features(d.path() / "a.wav", cfg, cache).bands(), 40u);
  EXPECT_EQ(std::distance(fs::directory_iterator(cache), fs::directory_iterator()), 2);
}

TEST(FeatureCache, ReadOnlyNeverWrites) {
  TempDir d;
  write_tone(d.path() / "a.wav", 10);
  const auto cache = d.path() / "cache";
  signal::FeatureConfig cfg;
  const auto miss = cached_features(d.path() / "a.wav", cfg, cache, CacheMode::kReadOnly);
  EXPECT_FALSE(fs::exists(cache));
  const auto stored = cached_features(d.path() / "a.wav", cfg, cache);
  EXPECT_EQ(miss.values, stored.values);
  const auto entry = fs::directory_iterator(cache)->path();
  write_text(entry, "garbage");
  EXPECT_EQ(cached_features(d.path() / "a.wav", cfg, cache, CacheMode::kReadOnly).values, stored.values);
  EXPECT_EQ(fs::file_size(entry), 7u);
}

TEST(FeatureCache, ContainerRejectsTruncationAndWrongKey) {
  signal::MelSpectrogram mel;
  mel.values = Tensor(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
  auto bytes = encode_mel(mel, 42);
  EXPECT_EQ(decode_mel(bytes, 42).values, mel.values);
  EXPECT_THROW(decode_mel(bytes, 43), DecodeError);
  bytes.pop_back();
  EXPECT_THROW(decode_mel(bytes, 42), DecodeError);
  bytes = encode_mel(mel, 42);
  bytes[40] ^= 1;
  EXPECT_THROW(decode_mel(bytes, 42), DecodeError);
}

TEST(Batch, SingleUtteranceHasNoPadding) {
  std::mt19937_64 rng(1);
  const auto u = random_utterance(rng, 0);
  const auto b = make_batch({u});
  EXPECT_EQ(b.max_phonemes(), u.num_phonemes());
  EXPECT_EQ(b.max_frames(), u.num_frames());
  for (bool m : b.phoneme_mask[0]) EXPECT_TRUE(m);
  for (bool m : b.frame_mask[0]) EXPECT_TRUE(m);
}

TEST(Batch, MasksDelimitLengths) {
  Utterance a, c;
  a.phonemes = {1, 2, 3};
  a.durations = {1, 1, 1};
  a.mel.values = Tensor(3, 2, 1.0);
  c.phonemes = {1, 2, 3, 4, 5};
  c.durations = {1, 1, 1, 1, 2};
  c.mel.values = Tensor(6, 2, 2.0);
  const auto b = make_batch({a, c});
  EXPECT_EQ(b.max_phonemes(), 5u);
  EXPECT_EQ(b.phoneme_mask[0], (std::vector<bool>{true, true, true, false, false}));
  EXPECT_EQ(b.phonemes[0], (std::vector<int>{1, 2, 3, 0, 0}));
  EXPECT_EQ(b.durations[0], (std::vector<int>{1, 1, 1, 0, 0}));
  for (std::size_t t = 3; t < 6; ++t) {
    EXPECT_FALSE(b.frame_mask[0][t]);
    EXPECT_EQ(b.mels[0](t, 0), 0.0);
  }
  EXPECT_THROW(make_batch({a, c}, PadTo{4, 10}), ContractError);
  EXPECT_EQ(make_batch({a}, PadTo{7, 9}).max_frames(), 9u);
  EXPECT_THROW(make_batch({}), ContractError);
}

TEST(Batch, UnbatchInvertsMakeBatch) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Utterance> us;
    const int n = 1 + int(rng() % 5);
    for (int i = 0; i < n; ++i) us.push_back(random_utterance(rng, i % 3));
    std::optional<PadTo> pad;
    if (trial % 2) pad = PadTo{12, 60};
    const auto back = unbatch(make_batch(us, pad));
    ASSERT_EQ(back.size(), us.size());
    for (std::size_t i = 0; i < us.size(); ++i) {
      EXPECT_EQ(back[i].id, us[i].id);
      EXPECT_EQ(back[i].speaker_id, us[i].speaker_id);
      EXPECT_EQ(back[i].phonemes, us[i].phonemes);
      EXPECT_EQ(back[i].durations, us[i].durations);
      EXPECT_EQ(back[i].mel.values, us[i].mel.values);
    }
  }
}

TEST(Synth, DurationsMatchFramesByConstruction) {
  SynthSpec s;
  s.num_speakers = 1;
  s.num_utterances = 1;
  s.min_phonemes = s.max_phonemes = 3;
  const auto c = synth_corpus(s);
  ASSERT_EQ(c.utterances.size(), 1u);
  const auto& u = c.utterances[0];
  EXPECT_EQ(u.num_phonemes(), 3u);
  int total = 0;
  for (int d : u.durations) total += d;
  EXPECT_EQ(std::size_t(total), u.num_frames());
}

TEST(Synth, MeanF0SeparatesSpeakers) {
  SynthSpec s;
  s.num_utterances = 6;
  const auto c = synth_corpus(s);
  std::vector<double> mean_f0[2];
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    const auto f0 = signal::estimate_f0(c.audio[i], 50.0, 600.0);
    const auto m = signal::mean_voiced_f0(f0);
    ASSERT_TRUE(m.has_value());
    mean_f0[c.utterances[i].speaker_id].push_back(*m);
  }
  for (double v : mean_f0[0]) {
    EXPECT_GT(v, 95.0);
    EXPECT_LT(v, 155.0);
  }
  for (double v : mean_f0[1]) {
    EXPECT_GT(v, 190.0);
    EXPECT_LT(v, 310.0);
  }
}

TEST(Synth, SegmentF0FollowsPitchParameter) {
  SynthSpec s;
  s.num_speakers = 1;
  s.num_utterances = 2;
  s.min_duration = s.max_duration = 8;
  const auto c = synth_corpus(s);
  const auto& u = c.utterances[0];
  const auto f0 = signal::estimate_f0(c.audio[0], 50.0, 600.0);
  // Middle frame of each segment against the generating F0.
  std::size_t start = 0;
  for (std::size_t i = 0; i < u.num_phonemes(); ++i) {
    const std::size_t mid = start + std::size_t(u.durations[i]) / 2;
    start += std::size_t(u.durations[i]);
    const double expect = 100.0 + 50.0 * c.pitch[0][i];
    ASSERT_TRUE(f0.voiced[mid]) << i;
    EXPECT_NEAR(f0.f0[mid], expect, 0.03 * expect) << i;
  }
}

TEST(Synth, SeedDeterminesCorpus) {
  SynthSpec s;
  s.num_utterances = 3;
  const auto a = synth_corpus(s), b = synth_corpus(s);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.audio[i].samples, b.audio[i].samples);
    EXPECT_EQ(a.utterances[i].mel.values, b.utterances[i].mel.values);
    EXPECT_EQ(a.utterances[i].phonemes, b.utterances[i].phonemes);
  }
  s.seed = 2;
  EXPECT_NE(synth_corpus(s).audio[0].samples, a.audio[0].samples);
}

TEST(Synth, WrittenCorpusLoadsBack) {
  TempDir d;
  SynthSpec s;
  s.num_utterances = 4;
  const auto c = synth_corpus(s);
  const auto manifest = write_corpus(c, d.path());
  const auto m = parse_manifest(manifest);
  EXPECT_EQ(m.vocab.symbols().size(), m.vocab.size());
  EXPECT_EQ(m.speakers, c.speakers);
  const auto utts = load_utterances(m, s.features, d.path() / "cache", 0);
  ASSERT_EQ(utts.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(utts[i].id, c.utterances[i].id);
    EXPECT_EQ(utts[i].durations, c.utterances[i].durations);
    std::vector<std::string> a, b;
    for (int p : utts[i].phonemes) a.push_back(m.vocab.symbol(p));
    for (int p : c.utterances[i].phonemes) b.push_back(c.vocab.symbol(p));
    EXPECT_EQ(a, b);
    // float32 storage: mels agree closely, not bitwise.
    const double diff = (utts[i].mel.values.map() - c.utterances[i].mel.values.map()).cwiseAbs().maxCoeff();
    EXPECT_LT(diff, 1e-3);
  }
}
