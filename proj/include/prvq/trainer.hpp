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
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prvq/autodiff.hpp"
#include "prvq/corpus.hpp"
#include "prvq/metrics.hpp"
#include "prvq/model.hpp"
#include "prvq/random.hpp"

namespace prvq::train {

enum class LrSchedule { kConstant, kCosine };
const char* to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;
  int warmup_steps = 1000;  // linear ramp from lr / warmup to lr
  /// After warmup: hold lr, or follow a half cosine down to final_lr_ratio * lr at max_steps.
  LrSchedule lr_schedule = LrSchedule::kCosine;
  double final_lr_ratio = 0.0;
  int batch_size = 8;
  long max_steps = 6000;
  double commitment_weight = 0.25;
  double ema_decay = 0.99;
  double ema_epsilon = 1e-5;
  std::uint64_t seed = 1;
  long eval_every = 500;
  long checkpoint_every = 1000;
  double clip_norm = 1.0;
  /// Codes whose EMA count drops below this are moved onto batch vectors. 0 disables.
  double dead_code_threshold = 0.03;

  void validate() const;
};

/// Learning rate used by the update that turns `step` into step + 1.
double learning_rate_at(const TrainConfig& c, long step);

struct LossParts {
  double l1 = 0.0;
  double l2 = 0.0;
  double commitment = 0.0;  // unweighted; total adds commitment_weight times this
  double total = 0.0;
};

/// Mean absolute and mean squared error over all cells of all pairs; total = l1 + l2.
LossParts mel_loss(std::span<const Tensor> predictions, std::span<const Tensor> targets);

/// Loss of the current model on `utterances` without touching any state.
LossParts compute_loss(const model::Model& m, std::span<const corpus::Utterance> utterances);
/// Same, on a padded batch; padding never enters the means.
LossParts compute_loss(const model::Model& m, const corpus::Batch& batch);

struct TrainState {
  TrainConfig config;
  model::Model model;
  ad::AdamState optimizer;
  long step = 0;
  long skipped_steps = 0;
  double best_eval = std::numeric_limits<double>::infinity();
  rnd::Engine rng;
  /// Current epoch permutation and position in it.
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
};

/// Fresh model and optimizer; the mel normaliser is fitted on `train_set`.
TrainState init_training(const model::ModelConfig& mc, const TrainConfig& tc,
                         std::span<const corpus::Utterance> train_set);

/// Indices of the next batch: consecutive slices of a per-epoch shuffle.
std::vector<std::size_t> next_batch(TrainState& state, std::size_t corpus_size);

struct StepResult {
  long step = 0;  // counter value after the step
  LossParts loss;
  bool skipped = false;
  std::string skip_reason;
  std::vector<double> usage;  // per level, over this batch
  std::size_t reinitialised = 0;
  double grad_norm = 0.0;
  double learning_rate = 0.0;
};

/// Forward, backward, clipped Adam, EMA codebook update and dead-code
/// reinitialisation. The very first quantized step seeds the codebooks with
/// k-means++ on the batch latents. A numeric failure leaves everything but the
/// step counter untouched.
StepResult train_step(TrainState& state, std::span<const corpus::Utterance> batch);

/// JSON line {step, l1, l2, commit, usage_l1, usage_l2}.
std::string log_line(const StepResult& r);

/// Cell-weighted mean L1 and per-utterance mean PSNR of reconstructions.
/// `max_levels` = 1 drops the level-2 contribution. Never updates codebooks.
metrics::MetricReport evaluate(const model::Model& m, std::span<const corpus::Utterance> eval_set, int max_levels = 0);

// ---- checkpoints --------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainState state;
  corpus::PhonemeVocab vocab;
  std::vector<std::string> speakers;
  signal::FeatureConfig features;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
/// Throws DecodeError on damage or a version mismatch; never returns partial state.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- loop ---------------------------------------------------------------

struct RunOptions {
  std::ostream* log = nullptr;                   // JSON lines
  std::optional<std::filesystem::path> checkpoint_dir;
  std::span<const corpus::Utterance> eval_set;   // empty: no periodic evaluation
  const corpus::PhonemeVocab* vocab = nullptr;   // stored in checkpoints
  const std::vector<std::string>* speakers = nullptr;
  signal::FeatureConfig features;
  std::function<void(const StepResult&)> on_step;
};

/// Steps until state.step reaches config.max_steps.
void run_training(TrainState& state, std::span<const corpus::Utterance> train_set, const RunOptions& opts);

}  // namespace prvq::train
