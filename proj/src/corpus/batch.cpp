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

#include "prvq/corpus.hpp"
#include "prvq/error.hpp"

namespace prvq::corpus {

Batch make_batch(const std::vector<Utterance>& utterances, std::optional<PadTo> pad_to) {
  if (utterances.empty()) throw ContractError("make_batch: empty utterance list");
  std::size_t n_max = 0, t_max = 0;
  const std::size_t bands = utterances.front().mel.bands();
  for (const auto& u : utterances) {
    if (u.phonemes.size() != u.durations.size()) throw ShapeError("make_batch: utterance " + u.id + " phoneme/duration lengths differ");
    if (u.mel.bands() != bands) throw ShapeError("make_batch: utterances have different mel band counts");
    n_max = std::max(n_max, u.phonemes.size());
    t_max = std::max(t_max, u.mel.frames());
  }
  if (pad_to) {
    if (pad_to->phonemes < n_max || pad_to->frames < t_max) {
      throw ContractError("make_batch: pad_to smaller than the longest utterance");
    }
    n_max = pad_to->phonemes;
    t_max = pad_to->frames;
  }

  Batch b;
  b.hop_length = utterances.front().mel.hop_length;
  b.n_fft = utterances.front().mel.n_fft;
  b.sample_rate = utterances.front().mel.sample_rate;
  for (const auto& u : utterances) {
    b.ids.push_back(u.id);
    b.speaker_ids.push_back(u.speaker_id);
    b.transcripts.push_back(u.transcript);
    std::vector<int> ph(n_max, PhonemeVocab::kPad), du(n_max, 0);
    std::copy(u.phonemes.begin(), u.phonemes.end(), ph.begin());
    std::copy(u.durations.begin(), u.durations.end(), du.begin());
    b.phonemes.push_back(std::move(ph));
    b.durations.push_back(std::move(du));
    std::vector<bool> pm(n_max, false), fm(t_max, false);
    std::fill_n(pm.begin(), u.phonemes.size(), true);
    std::fill_n(fm.begin(), u.mel.frames(), true);
    b.phoneme_mask.push_back(std::move(pm));
    b.frame_mask.push_back(std::move(fm));
    Tensor mel(t_max, bands);
    std::copy(u.mel.values.values().begin(), u.mel.values.values().end(), mel.values().begin());
    b.mels.push_back(std::move(mel));
  }
  return b;
}

std::vector<Utterance> unbatch(const Batch& b) {
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < b.size(); ++i) {
    Utterance u;
    u.id = b.ids[i];
    u.speaker_id = b.speaker_ids[i];
    u.transcript = b.transcripts[i];
    const auto n = std::size_t(std::count(b.phoneme_mask[i].begin(), b.phoneme_mask[i].end(), true));
    const auto t = std::size_t(std::count(b.frame_mask[i].begin(), b.frame_mask[i].end(), true));
    u.phonemes.assign(b.phonemes[i].begin(), b.phonemes[i].begin() + long(n));
    u.durations.assign(b.durations[i].begin(), b.durations[i].begin() + long(n));
    u.mel.hop_length = b.hop_length;
    u.mel.n_fft = b.n_fft;
    u.mel.sample_rate = b.sample_rate;
    const std::size_t bands = b.mels[i].cols();
    u.mel.values = Tensor(t, bands, std::vector<double>(b.mels[i].values().begin(),
                                                        b.mels[i].values().begin() + long(t * bands)));
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace prvq::corpus
