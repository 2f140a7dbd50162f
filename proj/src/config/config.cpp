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

#include "prvq/config.hpp"

namespace prvq::config {

ObjectReader::ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
}

const Json* ObjectReader::object(const char* key) {
  seen_.insert(key);
  auto it = j_.find(key);
  if (it == j_.end()) return nullptr;
  if (!it->is_object()) throw ConfigError(where(key) + ": expected an object, found " + it->type_name());
  return &*it;
}

const Json* ObjectReader::raw(const char* key) {
  seen_.insert(key);
  auto it = j_.find(key);
  return it == j_.end() ? nullptr : &*it;
}

void ObjectReader::finish() const {
  for (const auto& [k, v] : j_.items()) {
    if (!seen_.count(k)) throw ConfigError(where(k) + ": unknown key");
  }
}

namespace {

// Validation failures in a config file are usage errors.
template <typename F>
void as_config_error(F&& f) {
  try {
    f();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

Json to_json(const signal::FeatureConfig& c) {
  return Json{{"sample_rate", c.sample_rate}, {"n_fft", c.n_fft},
              {"hop_length", c.hop_length},   {"n_mels", c.n_mels},
              {"log_floor", c.log_floor},     {"griffin_lim_iterations", c.griffin_lim_iterations},
              {"f0_min", c.f0_min},           {"f0_max", c.f0_max},
              {"yin_threshold", c.yin_threshold}};
}

void from_json(const Json& j, signal::FeatureConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("sample_rate", c.sample_rate);
  r.get("n_fft", c.n_fft);
  r.get("hop_length", c.hop_length);
  r.get("n_mels", c.n_mels);
  r.get("log_floor", c.log_floor);
  r.get("griffin_lim_iterations", c.griffin_lim_iterations);
  r.get("f0_min", c.f0_min);
  r.get("f0_max", c.f0_max);
  r.get("yin_threshold", c.yin_threshold);
  r.finish();
  as_config_error([&] { c.validate(); });
}

Json to_json(const model::ModelConfig& c) {
  return Json{{"model_dim", c.model_dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"conv_kernel", c.conv_kernel},
              {"ffn_multiplier", c.ffn_multiplier},
              {"levels", c.levels},
              {"codebook_size", c.codebook_size},
              {"code_dim", c.code_dim},
              {"mel_bands", c.mel_bands},
              {"num_speakers", c.num_speakers},
              {"vocab_size", c.vocab_size},
              {"sigma_policy", model::to_string(c.sigma_policy)},
              {"sigma", c.sigma},
              {"quantization", model::to_string(c.quantization)}};
}

void from_json(const Json& j, model::ModelConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("model_dim", c.model_dim);
  r.get("layers", c.layers);
  r.get("heads", c.heads);
  r.get("conv_kernel", c.conv_kernel);
  r.get("ffn_multiplier", c.ffn_multiplier);
  r.get("levels", c.levels);
  r.get("codebook_size", c.codebook_size);
  r.get("code_dim", c.code_dim);
  r.get("mel_bands", c.mel_bands);
  r.get("num_speakers", c.num_speakers);
  r.get("vocab_size", c.vocab_size);
  std::string policy = model::to_string(c.sigma_policy), quant = model::to_string(c.quantization);
  r.get("sigma_policy", policy);
  r.get("sigma", c.sigma);
  r.get("quantization", quant);
  r.finish();
  try {
    c.sigma_policy = model::parse_sigma_policy(policy);
    c.quantization = model::parse_quantization(quant);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  // Vocabulary size comes from the data; only check it when set.
  model::ModelConfig probe = c;
  if (probe.vocab_size == 0) probe.vocab_size = 2;
  as_config_error([&] { probe.validate(); });
}

Json to_json(const train::TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"warmup_steps", c.warmup_steps},
              {"lr_schedule", train::to_string(c.lr_schedule)},
              {"final_lr_ratio", c.final_lr_ratio},
              {"batch_size", c.batch_size},
              {"max_steps", c.max_steps},
              {"commitment_weight", c.commitment_weight},
              {"ema_decay", c.ema_decay},
              {"ema_epsilon", c.ema_epsilon},
              {"seed", c.seed},
              {"eval_every", c.eval_every},
              {"checkpoint_every", c.checkpoint_every},
              {"clip_norm", c.clip_norm},
              {"dead_code_threshold", c.dead_code_threshold}};
}

void from_json(const Json& j, train::TrainConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("learning_rate", c.learning_rate);
  r.get("warmup_steps", c.warmup_steps);
  std::string schedule = train::to_string(c.lr_schedule);
  r.get("lr_schedule", schedule);
  try {
    c.lr_schedule = train::parse_lr_schedule(schedule);
  } catch (const ConfigError& e) {
    throw ConfigError(r.where("lr_schedule") + ": " + e.what());
  }
  r.get("final_lr_ratio", c.final_lr_ratio);
  r.get("batch_size", c.batch_size);
  r.get("max_steps", c.max_steps);
  r.get("commitment_weight", c.commitment_weight);
  r.get("ema_decay", c.ema_decay);
  r.get("ema_epsilon", c.ema_epsilon);
  r.get("seed", c.seed);
  r.get("eval_every", c.eval_every);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("clip_norm", c.clip_norm);
  r.get("dead_code_threshold", c.dead_code_threshold);
  r.finish();
  as_config_error([&] { c.validate(); });
}

Json to_json(const corpus::SynthSpec& c) {
  Json ranges = Json::array();
  for (auto [lo, hi] : c.f0_ranges) ranges.push_back(Json::array({lo, hi}));
  return Json{{"num_speakers", c.num_speakers},
              {"num_utterances", c.num_utterances},
              {"inventory", c.inventory},
              {"min_phonemes", c.min_phonemes},
              {"max_phonemes", c.max_phonemes},
              {"min_duration", c.min_duration},
              {"max_duration", c.max_duration},
              {"f0_ranges", ranges},
              {"amplitude_spread", c.amplitude_spread},
              {"level", c.level},
              {"seed", c.seed}};
}

void from_json(const Json& j, corpus::SynthSpec& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("num_speakers", c.num_speakers);
  r.get("num_utterances", c.num_utterances);
  r.get("inventory", c.inventory);
  r.get("min_phonemes", c.min_phonemes);
  r.get("max_phonemes", c.max_phonemes);
  r.get("min_duration", c.min_duration);
  r.get("max_duration", c.max_duration);
  r.get("amplitude_spread", c.amplitude_spread);
  r.get("level", c.level);
  r.get("seed", c.seed);
  if (const Json* ranges = r.raw("f0_ranges")) {
    const std::string where = r.where("f0_ranges");
    if (!ranges->is_array()) throw ConfigError(where + ": expected an array of [low, high] pairs");
    c.f0_ranges.clear();
    for (std::size_t i = 0; i < ranges->size(); ++i) {
      const Json& e = (*ranges)[i];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
        throw ConfigError(where + "[" + std::to_string(i) + "]: expected [low, high]");
      }
      c.f0_ranges.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
  }
  r.finish();
  as_config_error([&] { c.validate(); });
}

}  // namespace prvq::config
