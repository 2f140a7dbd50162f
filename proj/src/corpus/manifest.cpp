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

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "prvq/binary_io.hpp"
#include "prvq/corpus.hpp"
#include "prvq/error.hpp"

namespace prvq::corpus {

namespace fs = std::filesystem;
using json = nlohmann::json;

PhonemeVocab::PhonemeVocab() { add(kPadSymbol); }

PhonemeVocab PhonemeVocab::from_symbols(const std::vector<std::string>& symbols) {
  if (symbols.empty() || symbols.front() != kPadSymbol) {
    throw DataError("phoneme vocabulary must start with the pad symbol " + std::string(kPadSymbol));
  }
  PhonemeVocab v;
  for (std::size_t i = 1; i < symbols.size(); ++i) {
    if (v.find(symbols[i])) throw DataError("phoneme vocabulary repeats symbol '" + symbols[i] + "'");
    v.add(symbols[i]);
  }
  return v;
}

int PhonemeVocab::add(const std::string& symbol) {
  if (symbol.empty()) throw DataError("phoneme symbol must be non-empty");
  auto [it, fresh] = ids_.try_emplace(symbol, int(symbols_.size()));
  if (fresh) symbols_.push_back(symbol);
  return it->second;
}

std::optional<int> PhonemeVocab::find(const std::string& symbol) const {
  auto it = ids_.find(symbol);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

int PhonemeVocab::id(const std::string& symbol) const {
  if (auto v = find(symbol)) return *v;
  throw DataError("unknown phoneme symbol '" + symbol + "'");
}

const std::string& PhonemeVocab::symbol(int id) const {
  if (id < 0 || std::size_t(id) >= symbols_.size()) {
    throw ContractError("phoneme ID " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(symbols_.size()));
  }
  return symbols_[std::size_t(id)];
}

void Utterance::validate(std::size_t vocab_size) const {
  if (phonemes.empty()) throw ContractError("utterance " + id + ": no phonemes");
  if (phonemes.size() != durations.size()) {
    throw ShapeError("utterance " + id + ": " + std::to_string(phonemes.size()) + " phonemes but " +
                     std::to_string(durations.size()) + " durations");
  }
  long total = 0;
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    if (durations[i] < 1) throw ContractError("utterance " + id + ": duration < 1 at phoneme " + std::to_string(i));
    if (phonemes[i] <= PhonemeVocab::kPad || std::size_t(phonemes[i]) >= vocab_size) {
      throw ContractError("utterance " + id + ": phoneme ID " + std::to_string(phonemes[i]) + " out of range");
    }
    total += durations[i];
  }
  if (std::size_t(total) != mel.frames()) {
    throw ContractError("utterance " + id + ": durations sum to " + std::to_string(total) + " but mel has " +
                        std::to_string(mel.frames()) + " frames");
  }
  if (speaker_id < 0) throw ContractError("utterance " + id + ": negative speaker ID");
}

RecordError::RecordError(std::size_t record, const std::string& field, const std::string& what)
    : DataError("manifest record " + std::to_string(record) + ", field '" + field + "': " + what),
      record_(record),
      field_(field) {}

namespace {

std::vector<std::string> split_symbols(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

}  // namespace

Manifest parse_manifest_text(const std::string& text, const fs::path& base_dir, const ManifestOptions& opts) {
  Manifest m;
  if (opts.fixed_vocab) m.vocab = *opts.fixed_vocab;
  if (opts.fixed_speakers) m.speakers = *opts.fixed_speakers;
  std::map<std::string, int> speaker_ids;
  for (std::size_t i = 0; i < m.speakers.size(); ++i) speaker_ids.emplace(m.speakers[i], int(i));

  std::istringstream in(text);
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::size_t r = record++;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw RecordError(r, "json", e.what());
    }
    if (!j.is_object()) throw RecordError(r, "json", "record is not an object");

    UtteranceDescriptor d;
    d.record = r;
    auto field = [&](const char* name) -> const json& {
      if (!j.contains(name)) throw RecordError(r, name, "missing");
      return j.at(name);
    };

    const json& audio = field("audio");
    if (!audio.is_string() || audio.get<std::string>().empty()) throw RecordError(r, "audio", "expected a path string");
    d.audio = fs::path(audio.get<std::string>());
    if (d.audio.is_relative()) d.audio = base_dir / d.audio;
    if (opts.require_audio && !fs::exists(d.audio)) throw RecordError(r, "audio", "file not found: " + d.audio.string());

    const json& spk = field("speaker");
    if (spk.is_string()) {
      d.speaker = spk.get<std::string>();
    } else if (spk.is_number_integer()) {
      d.speaker = std::to_string(spk.get<long>());
    } else {
      throw RecordError(r, "speaker", "expected a string or integer");
    }
    if (auto it = speaker_ids.find(d.speaker); it != speaker_ids.end()) {
      d.speaker_id = it->second;
    } else if (opts.fixed_speakers) {
      throw RecordError(r, "speaker", "unknown speaker '" + d.speaker + "'");
    } else {
      d.speaker_id = int(m.speakers.size());
      speaker_ids.emplace(d.speaker, d.speaker_id);
      m.speakers.push_back(d.speaker);
    }

    const json& phones = field("phones");
    std::vector<std::string> symbols;
    if (phones.is_string()) {
      symbols = split_symbols(phones.get<std::string>());
    } else if (phones.is_array()) {
      for (const auto& p : phones) {
        if (!p.is_string()) throw RecordError(r, "phones", "array entries must be strings");
        symbols.push_back(p.get<std::string>());
      }
    } else {
      throw RecordError(r, "phones", "expected space-separated symbols");
    }
    if (symbols.empty()) throw RecordError(r, "phones", "empty phoneme sequence");
    for (const auto& s : symbols) {
      if (s == PhonemeVocab::kPadSymbol) throw RecordError(r, "phones", "pad symbol is reserved");
      if (opts.fixed_vocab) {
        auto id = m.vocab.find(s);
        if (!id) throw RecordError(r, "phones", "unknown symbol '" + s + "'");
        d.phonemes.push_back(*id);
      } else {
        d.phonemes.push_back(m.vocab.add(s));
      }
    }

    const json& durs = field("durations");
    if (!durs.is_array()) throw RecordError(r, "durations", "expected an integer array");
    for (const auto& v : durs) {
      if (!v.is_number_integer()) throw RecordError(r, "durations", "entries must be integers");
      const long x = v.get<long>();
      if (x < 1) throw RecordError(r, "durations", "entries must be >= 1");
      d.durations.push_back(int(x));
    }
    if (d.durations.size() != d.phonemes.size()) {
      throw RecordError(r, "durations", std::to_string(d.durations.size()) + " durations for " +
                                            std::to_string(d.phonemes.size()) + " phonemes");
    }

    if (j.contains("text") && !j.at("text").is_null()) {
      if (!j.at("text").is_string()) throw RecordError(r, "text", "expected a string");
      d.transcript = j.at("text").get<std::string>();
    }
    if (j.contains("id")) {
      if (!j.at("id").is_string()) throw RecordError(r, "id", "expected a string");
      d.id = j.at("id").get<std::string>();
    } else {
      d.id = d.audio.stem().string();
    }
    m.records.push_back(std::move(d));
  }
  return m;
}

Manifest parse_manifest(const fs::path& path, const ManifestOptions& opts) {
  const auto bytes = io::read_file(path);
  return parse_manifest_text(std::string(bytes.begin(), bytes.end()), path.parent_path(), opts);
}

std::vector<int> reconcile_durations(std::vector<int> durations, std::size_t frames, int tolerance) {
  if (durations.empty()) throw ContractError("reconcile_durations: no durations");
  if (tolerance < 0) throw ContractError("reconcile_durations: negative tolerance");
  long total = 0;
  for (int d : durations) total += d;
  const long diff = long(frames) - total;
  if (std::abs(diff) > tolerance) {
    throw ContractError("duration mismatch: durations sum to " + std::to_string(total) + ", mel has " +
                        std::to_string(frames) + " frames (tolerance " + std::to_string(tolerance) + ")");
  }
  const long last = durations.back() + diff;
  if (last < 1) {
    throw ContractError("duration mismatch: absorbing " + std::to_string(diff) +
                        " frames leaves the last phoneme with duration " + std::to_string(last));
  }
  durations.back() = int(last);
  return durations;
}

namespace {

constexpr char kMelMagic[8] = {'P', 'R', 'V', 'Q', 'M', 'E', 'L', '1'};

}  // namespace

std::vector<std::uint8_t> encode_mel(const signal::MelSpectrogram& mel, std::uint64_t key) {
  io::ByteWriter w;
  w.put_string(std::string_view(kMelMagic, 8));
  w.put<std::uint64_t>(key);
  w.put<std::uint32_t>(std::uint32_t(mel.frames()));
  w.put<std::uint32_t>(std::uint32_t(mel.bands()));
  w.put<std::int32_t>(mel.hop_length);
  w.put<std::int32_t>(mel.n_fft);
  w.put<std::int32_t>(mel.sample_rate);
  w.put_doubles(mel.values.values());
  w.put<std::uint64_t>(io::fnv1a64(w.bytes()));
  return w.take();
}

signal::MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes, std::uint64_t expected_key) {
  io::ByteReader r(bytes);
  if (r.get_string(8, "magic") != std::string_view(kMelMagic, 8)) throw DecodeError("not a mel cache file", 0);
  if (r.get<std::uint64_t>("key") != expected_key) throw DecodeError("mel cache key mismatch", 8);
  const std::size_t frames = r.get<std::uint32_t>("frames");
  const std::size_t bands = r.get<std::uint32_t>("bands");
  signal::MelSpectrogram mel;
  mel.hop_length = r.get<std::int32_t>("hop_length");
  mel.n_fft = r.get<std::int32_t>("n_fft");
  mel.sample_rate = r.get<std::int32_t>("sample_rate");
  mel.values = Tensor(frames, bands);
  r.get_doubles(mel.values.values(), "values");
  const std::size_t body = r.position();
  if (r.get<std::uint64_t>("checksum") != io::fnv1a64(bytes.first(body))) {
    throw DecodeError("mel cache checksum mismatch", body);
  }
  return mel;
}

signal::MelSpectrogram cached_features(const fs::path& audio, const signal::FeatureConfig& cfg,
                                       const std::optional<fs::path>& cache_dir, CacheMode mode) {
  const auto bytes = io::read_file(audio);
  const std::uint64_t key = io::fnv1a64(io::hex64(io::fnv1a64(bytes)) + ":" + io::hex64(cfg.hash()));
  fs::path entry;
  if (cache_dir) {
    entry = *cache_dir / (io::hex64(key) + ".mel");
    if (fs::exists(entry)) {
      try {
        return decode_mel(io::read_file(entry), key);
      } catch (const DecodeError&) {
        // Stale or damaged entry: recompute and overwrite below.
      }
    }
  }
  auto mel = signal::mel_spectrogram(signal::decode_wav(bytes), cfg);
  if (cache_dir && mode == CacheMode::kReadWrite) io::write_file_atomic(entry, encode_mel(mel, key));
  return mel;
}

std::vector<Utterance> load_utterances(const Manifest& m, const signal::FeatureConfig& cfg,
                                       const std::optional<fs::path>& cache_dir, int tolerance, CacheMode mode) {
  std::vector<Utterance> out;
  out.reserve(m.records.size());
  for (const auto& d : m.records) {
    Utterance u;
    u.id = d.id;
    u.speaker_id = d.speaker_id;
    u.phonemes = d.phonemes;
    u.transcript = d.transcript;
    try {
      u.mel = cached_features(d.audio, cfg, cache_dir, mode);
    } catch (const RecordError&) {
      throw;
    } catch (const Error& e) {
      throw RecordError(d.record, "audio", e.what());
    }
    try {
      u.durations = reconcile_durations(d.durations, u.mel.frames(), tolerance);
    } catch (const ContractError& e) {
      throw RecordError(d.record, "durations", e.what());
    }
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace prvq::corpus
