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
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "prvq/binary_io.hpp"
#include "prvq/error.hpp"
#include "prvq/trainer.hpp"

using namespace prvq;
using train::TrainConfig;
using train::TrainState;
using train::LrSchedule;
using train::parse_lr_schedule;

namespace {

corpus::Utterance make_utt(std::string id, std::vector<int> phonemes, std::vector<int> durations, int speaker,
                           std::uint64_t seed, std::size_t bands = 10) {
  corpus::Utterance u;
  u.id = std::move(id);
  u.phonemes = std::move(phonemes);
  u.durations = std::move(durations);
  u.speaker_id = speaker;
  const int frames = std::accumulate(u.durations.begin(), u.durations.end(), 0);
  rnd::Engine rng(seed);
  u.mel.values = Tensor(std::size_t(frames), bands);
  // Smooth per-phoneme spectra so the toy task is learnable.
  std::size_t t = 0;
  for (std::size_t i = 0; i < u.phonemes.size(); ++i) {
    const double level = -4.0 + 0.5 * u.phonemes[i] + 0.3 * speaker + 0.2 * rnd::normal(rng);
    for (int k = 0; k < u.durations[i]; ++k, ++t) {
      for (std::size_t b = 0; b < bands; ++b) u.mel.values(t, b) = level - 0.1 * double(b) * (1 + u.phonemes[i] % 3);
    }
  }
  return u;
}

std::vector<corpus::Utterance> toy_set() {
  return {make_utt("a", {1, 2, 3, 4}, {3, 4, 2, 3}, 0, 1), make_utt("b", {4, 3, 2}, {2, 5, 3}, 1, 2),
          make_utt("c", {2, 2, 1, 3, 4}, {2, 2, 3, 2, 4}, 0, 3), make_utt("d", {1, 4}, {6, 4}, 1, 4)};
}

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.model_dim = 16;
  c.layers = 1;
  c.heads = 2;
  c.ffn_multiplier = 2;
  c.codebook_size = 8;
  c.mel_bands = 10;
  c.vocab_size = 5;
  return c;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.batch_size = 2;
  t.warmup_steps = 10;
  t.learning_rate = 3e-3;
  t.max_steps = 6;
  t.seed = 11;
  return t;
}

std::vector<train::StepResult> run_steps(TrainState& s, const std::vector<corpus::Utterance>& data, long n) {
  std::vector<train::StepResult> out;
  for (long i = 0; i < n; ++i) {
    std::vector<corpus::Utterance> batch;
    for (auto k : train::next_batch(s, data.size())) batch.push_back(data[k]);
    out.push_back(train::train_step(s, batch));
  }
  return out;
}

}  // namespace

TEST(MelLoss, Examples) {
  const Tensor a(3, 4, 1.5);
  auto p = train::mel_loss(std::vector<Tensor>{a}, std::vector<Tensor>{a});
  EXPECT_EQ(p.l1, 0.0);
  EXPECT_EQ(p.l2, 0.0);
  p = train::mel_loss(std::vector<Tensor>{Tensor(3, 4, 2.5)}, std::vector<Tensor>{a});
  EXPECT_DOUBLE_EQ(p.l1, 1.0);
  EXPECT_DOUBLE_EQ(p.l2, 1.0);
  EXPECT_DOUBLE_EQ(p.total, 2.0);
}

TEST(MelLoss, CellWeightedOracle) {
  rnd::Engine rng(5);
  std::vector<Tensor> pred, tgt;
  double sa = 0, ss = 0;
  std::size_t n = 0;
  for (std::size_t rows : {3u, 7u, 1u}) {
    Tensor p(rows, 4), t(rows, 4);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rnd::normal(rng);
      t[i] = rnd::normal(rng);
      sa += std::abs(p[i] - t[i]);
      ss += (p[i] - t[i]) * (p[i] - t[i]);
      ++n;
    }
    pred.push_back(p);
    tgt.push_back(t);
  }
  const auto l = train::mel_loss(pred, tgt);
  EXPECT_NEAR(l.l1, sa / double(n), 1e-14);
  EXPECT_NEAR(l.l2, ss / double(n), 1e-14);
  EXPECT_THROW(train::mel_loss(pred, std::vector<Tensor>{}), ShapeError);
}

TEST(ComputeLoss, PaddingNeverCounts) {
  const auto data = toy_set();
  TrainState s = train::init_training(tiny_model(), quick_train(), data);
  run_steps(s, data, 1);  // seeds the codebooks
  auto batch = corpus::make_batch(data, corpus::PadTo{8, 32});
  const auto base = train::compute_loss(s.model, batch);
  for (std::size_t b = 0; b < batch.mels.size(); ++b) {
    for (std::size_t t = 0; t < batch.frame_mask[b].size(); ++t) {
      if (!batch.frame_mask[b][t]) {
        for (auto& v : batch.mels[b].row(t)) v = 2.0 * v + 3.0;
      }
    }
  }
  const auto doubled = train::compute_loss(s.model, batch);
  EXPECT_EQ(base.total, doubled.total);
  const auto direct = train::compute_loss(s.model, std::span<const corpus::Utterance>(data));
  EXPECT_EQ(base.total, direct.total);
  EXPECT_GE(base.l1, 0.0);
  EXPECT_GE(base.l2, 0.0);
  EXPECT_GE(base.commitment, 0.0);
  EXPECT_EQ(base.total, base.l1 + base.l2 + 0.25 * base.commitment);
}

TEST(TrainStep, ZeroLearningRateOnlyMovesCodebooks) {
  const auto data = toy_set();
  TrainConfig tc = quick_train();
  TrainState s = train::init_training(tiny_model(), tc, data);
  run_steps(s, data, 1);
  ASSERT_TRUE(s.model.rvq.initialized());
  s.config.learning_rate = 0.0;
  const auto params = s.model.params;
  const auto counts = s.model.rvq.levels[0].ema_count;
  const auto r = run_steps(s, data, 1);
  EXPECT_FALSE(r[0].skipped);
  EXPECT_EQ(s.step, 2);
  EXPECT_EQ(s.model.params, params);
  EXPECT_NE(s.model.rvq.levels[0].ema_count, counts);
}

TEST(TrainStep, SameSeedSameCurve) {
  const auto data = toy_set();
  TrainState a = train::init_training(tiny_model(), quick_train(), data);
  TrainState b = train::init_training(tiny_model(), quick_train(), data);
  const auto ra = run_steps(a, data, 5), rb = run_steps(b, data, 5);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(train::log_line(ra[i]), train::log_line(rb[i]));
    EXPECT_EQ(ra[i].loss.total, rb[i].loss.total);
  }
  EXPECT_EQ(a.model.params, b.model.params);
}

TEST(TrainStep, NumericFailureSkipsStep) {
  auto data = toy_set();
  TrainState s = train::init_training(tiny_model(), quick_train(), data);
  run_steps(s, data, 2);
  const auto params = s.model.params;
  const auto books = s.model.rvq.levels[1].entries;
  const auto adam_steps = s.optimizer.step;
  const auto rng_before = s.rng;
  data[2].mel.values(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto r = train::train_step(s, std::vector<corpus::Utterance>{data[0], data[2]});
  EXPECT_TRUE(r.skipped);
  EXPECT_NE(r.skip_reason.find("utterance c"), std::string::npos) << r.skip_reason;
  EXPECT_EQ(s.step, 3);
  EXPECT_EQ(s.skipped_steps, 1);
  EXPECT_EQ(s.model.params, params);
  EXPECT_EQ(s.model.rvq.levels[1].entries, books);
  EXPECT_EQ(s.optimizer.step, adam_steps);
  EXPECT_TRUE(s.rng == rng_before);
}

TEST(TrainStep, OverfitsSmallBatch) {
  const auto data = toy_set();
  TrainConfig tc = quick_train();
  tc.batch_size = 4;
  tc.warmup_steps = 20;
  tc.max_steps = 400;
  TrainState s = train::init_training(tiny_model(), tc, data);
  const auto first = run_steps(s, data, 1)[0].loss.total;
  run_steps(s, data, 399);
  const auto after = train::compute_loss(s.model, std::span<const corpus::Utterance>(data)).total;
  EXPECT_LT(after, 0.1 * first) << first << " -> " << after;
}

TEST(NextBatch, EachEpochCoversCorpus) {
  const auto data = toy_set();
  TrainConfig tc = quick_train();
  tc.batch_size = 3;
  TrainState s = train::init_training(tiny_model(), tc, data);
  std::vector<std::size_t> seen;
  for (auto i : train::next_batch(s, 7)) seen.push_back(i);
  for (auto i : train::next_batch(s, 7)) seen.push_back(i);
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
  EXPECT_EQ(train::next_batch(s, 7).size(), 3u);  // new epoch
}

TEST(Evaluate, ContractsAndLevels) {
  const auto data = toy_set();
  TrainState s = train::init_training(tiny_model(), quick_train(), data);
  run_steps(s, data, 3);
  EXPECT_THROW(train::evaluate(s.model, std::span<const corpus::Utterance>{}), ContractError);
  const auto rvq = s.model.rvq;
  const auto full = train::evaluate(s.model, data);
  const auto first = train::evaluate(s.model, data, 1);
  EXPECT_TRUE(std::isfinite(*full.psnr) && std::isfinite(*first.psnr));
  EXPECT_GT(*full.l1, 0.0);
  EXPECT_EQ(s.model.rvq.levels[0].ema_count, rvq.levels[0].ema_count);
  EXPECT_EQ(s.model.rvq.levels[1].entries, rvq.levels[1].entries);
}

TEST(LogLine, Fields) {
  train::StepResult r;
  r.step = 4;
  r.loss = {0.5, 0.25, 0.125, 0.0};
  r.usage = {0.5, 0.75};
  const auto j = nlohmann::json::parse(train::log_line(r));
  EXPECT_EQ(j["step"], 4);
  EXPECT_EQ(j["l1"], 0.5);
  EXPECT_EQ(j["l2"], 0.25);
  EXPECT_EQ(j["commit"], 0.125);
  EXPECT_EQ(j["usage_l1"], 0.5);
  EXPECT_EQ(j["usage_l2"], 0.75);
}

// ---- checkpoints ----

namespace {

train::Checkpoint checkpoint_of(const TrainState& s) {
  return {s, corpus::PhonemeVocab::from_symbols({"<pad>", "a", "b", "c", "d"}), {"x", "y"}, signal::FeatureConfig{}};
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const auto data = toy_set();
  TrainState s = train::init_training(tiny_model(), quick_train(), data);
  run_steps(s, data, 3);
  const auto bytes = train::encode_checkpoint(checkpoint_of(s));
  const auto c = train::decode_checkpoint(bytes);
  EXPECT_EQ(c.state.model.params, s.model.params);
  EXPECT_EQ(c.state.optimizer.m, s.optimizer.m);
  EXPECT_EQ(c.state.optimizer.v, s.optimizer.v);
  EXPECT_EQ(c.state.step, 3);
  EXPECT_EQ(c.speakers, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(c.vocab.symbol(3), "c");
  for (const auto& u : data) {
    EXPECT_EQ(model::reconstruct(c.state.model, u).values, model::reconstruct(s.model, u).values);
  }
  EXPECT_EQ(train::encode_checkpoint(c), bytes);
}

TEST(Checkpoint, ResumeContinuesIdentically) {
  const auto data = toy_set();
  TrainState whole = train::init_training(tiny_model(), quick_train(), data);
  const auto ref = run_steps(whole, data, 6);

  TrainState first = train::init_training(tiny_model(), quick_train(), data);
  run_steps(first, data, 3);
  TrainState resumed = train::decode_checkpoint(train::encode_checkpoint(checkpoint_of(first))).state;
  const auto rest = run_steps(resumed, data, 3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(train::log_line(rest[i]), train::log_line(ref[i + 3]));
  EXPECT_EQ(resumed.model.params, whole.model.params);
  EXPECT_EQ(resumed.model.rvq.levels[0].entries, whole.model.rvq.levels[0].entries);
}

TEST(Checkpoint, DamageIsDetected) {
  const auto data = toy_set();
  TrainState s = train::init_training(tiny_model(), quick_train(), data);
  auto bytes = train::encode_checkpoint(checkpoint_of(s));
  for (std::size_t cut : {std::size_t(4), std::size_t(20), bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(train::decode_checkpoint(std::span<const std::uint8_t>(bytes).first(cut)), DecodeError) << cut;
  }
  auto flipped = bytes;
  flipped[flipped.size() - 100] ^= 1;
  EXPECT_THROW(train::decode_checkpoint(flipped), DecodeError);

  auto versioned = bytes;
  versioned[8] = 2;
  try {
    train::decode_checkpoint(versioned);
    FAIL() << "version mismatch accepted";
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 1, found 2"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, ContinuousModel) {
  const auto data = toy_set();
  auto mc = tiny_model();
  mc.quantization = model::Quantization::kNone;
  TrainState s = train::init_training(mc, quick_train(), data);
  const auto r = run_steps(s, data, 2);
  EXPECT_EQ(r[1].loss.commitment, 0.0);
  EXPECT_TRUE(r[1].usage.empty());
  const auto c = train::decode_checkpoint(train::encode_checkpoint(checkpoint_of(s)));
  EXPECT_EQ(model::reconstruct(c.state.model, data[0]).values, model::reconstruct(s.model, data[0]).values);
}

TEST(LearningRate, WarmupThenSchedule) {
  TrainConfig c;
  c.learning_rate = 1.0;
  c.warmup_steps = 10;
  c.max_steps = 110;
  c.lr_schedule = LrSchedule::kConstant;
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 0), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 9), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 100), 1.0);
  c.lr_schedule = LrSchedule::kCosine;
  c.final_lr_ratio = 0.2;
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 4), 0.5);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 10), 1.0);
  EXPECT_NEAR(learning_rate_at(c, 60), 0.6, 1e-15);  // halfway: 0.2 + 0.8 / 2
  EXPECT_NEAR(learning_rate_at(c, 110), 0.2, 1e-15);
  EXPECT_NEAR(learning_rate_at(c, 500), 0.2, 1e-15);
  for (long s = 10; s < 110; ++s) EXPECT_LE(learning_rate_at(c, s + 1), learning_rate_at(c, s));
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ContractError);
  t = TrainConfig{};
  t.ema_decay = 1.0;
  EXPECT_THROW(t.validate(), ContractError);
  t = TrainConfig{};
  t.final_lr_ratio = 1.5;
  EXPECT_THROW(t.validate(), ContractError);
  EXPECT_EQ(parse_lr_schedule("cosine"), LrSchedule::kCosine);
  EXPECT_THROW(parse_lr_schedule("step"), ConfigError);
}
