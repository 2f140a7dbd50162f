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

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prvq/autodiff.hpp"
#include "prvq/corpus.hpp"
#include "prvq/quantizer.hpp"
#include "prvq/random.hpp"
#include "prvq/signal.hpp"

namespace prvq::model {

enum class SigmaPolicy {
  kDuration,   // sigma_i = max(d_i, 1) / 3
  kFixed,      // sigma_i = ModelConfig::sigma
  kLearnable,  // one scalar, initialised to ModelConfig::sigma
};

enum class Quantization { kRvq, kNone };

struct ModelConfig {
  int model_dim = 64;
  int layers = 2;  // conformer blocks per module
  int heads = 2;
  int conv_kernel = 7;
  int ffn_multiplier = 4;
  int levels = 2;
  int codebook_size = 64;
  int code_dim = 3;
  int mel_bands = 80;
  int num_speakers = 2;
  int vocab_size = 0;  // including the pad symbol
  SigmaPolicy sigma_policy = SigmaPolicy::kDuration;
  double sigma = 1.0;
  Quantization quantization = Quantization::kRvq;

  void validate() const;
};

const char* to_string(SigmaPolicy p);
const char* to_string(Quantization q);
SigmaPolicy parse_sigma_policy(const std::string& s);
Quantization parse_quantization(const std::string& s);

/// Trainable parameters plus the non-trainable quantizer state and mel normaliser.
struct Model {
  ModelConfig config;
  ad::NamedTensors params;
  vq::RVQ rvq;
  Tensor mel_mean;  // 1 x M
  Tensor mel_std;   // 1 x M

  std::size_t parameter_count() const;
};

/// Fresh parameters; RVQ statistics are set from `rvq_decay`, `rvq_epsilon`, `beta`.
Model init_model(const ModelConfig& cfg, rnd::Engine& rng, double rvq_decay = 0.99, double rvq_epsilon = 1e-5,
                 double beta = 0.25);

/// Per-band mean and standard deviation (floored at 1e-3) over all frames.
void fit_normalizer(Model& m, std::span<const corpus::Utterance> utterances);

// ---- Gaussian resampling ------------------------------------------------

struct ResampleWeights {
  Tensor w;  // T x N, rows sum to 1
  std::vector<double> centers;
  std::vector<double> sigmas;
};

ResampleWeights gaussian_weights(std::span<const int> durations, std::size_t frames, SigmaPolicy policy,
                                 double sigma = 1.0);
/// out_i = sum_t W[t,i] x_t / sum_t W[t,i].
Tensor downsample(const Tensor& x, const ResampleWeights& w);
/// out_t = sum_i W[t,i] h_i.
Tensor upsample(const Tensor& h, const ResampleWeights& w);

// ---- graph-level building blocks ----------------------------------------

/// Binds named parameters into a graph, as leaves when trainable.
class Binder {
 public:
  Binder(ad::Graph& g, const ad::NamedTensors& params, bool trainable);

  ad::Var operator()(const std::string& name);
  /// Replaces a parameter by an existing variable (used by gradient checks).
  void override_with(const std::string& name, ad::Var v);
  ad::Graph& graph() { return g_; }
  /// Gradients of every bound trainable parameter after backward().
  ad::NamedTensors grads() const;

 private:
  ad::Graph& g_;
  const ad::NamedTensors& params_;
  bool trainable_;
  std::map<std::string, ad::Var> bound_;
};

/// One conformer block stack. `keep` marks real (unpadded) rows; nullptr means all.
ad::Var conformer(Binder& p, const ModelConfig& cfg, const std::string& prefix, ad::Var x,
                  const std::vector<bool>* keep = nullptr);

ad::Var linguistic_features(Binder& p, const Model& m, std::span<const int> phonemes,
                            const std::vector<bool>* keep = nullptr);

/// Upsampling weights W (T x N) as a graph value.
ad::Var resample_weights(Binder& p, const Model& m, std::span<const int> durations, std::size_t frames);

/// Encoder up to the d-dimensional latent (before quantization).
ad::Var encode_latent(Binder& p, const Model& m, const Tensor& mel, ad::Var weights, ad::Var ling);

/// Decoder from d-dimensional vectors to raw log-mel frames.
ad::Var decode_latent(Binder& p, const Model& m, ad::Var q, ad::Var ling, int speaker, ad::Var weights);

struct TrainForward {
  ad::Var mel;         // T x M prediction
  ad::Var commitment;  // beta-weighted; invalid when bypassing
  ad::Var latent;      // N x d encoder output
  std::optional<vq::RvqResult> rvq;
};

/// Full differentiable pass for one utterance. The quantizer is bypassed when
/// the config says so or `bypass` is set.
TrainForward forward(Binder& p, const Model& m, const corpus::Utterance& u, bool bypass = false);

// ---- inference ----------------------------------------------------------

/// Linguistic features (N x model_dim) for a possibly padded phoneme row.
Tensor phoneme_encode(const Model& m, std::span<const int> phonemes, const std::vector<bool>& keep);

Tensor encode_continuous(const Model& m, const corpus::Utterance& u);
vq::CodeSequence encode_utterance(const Model& m, const corpus::Utterance& u);

signal::MelSpectrogram decode_vectors(const Model& m, const Tensor& q, std::span<const int> phonemes,
                                      std::span<const int> durations, int speaker_id);
signal::MelSpectrogram decode_codes(const Model& m, const std::vector<std::vector<int>>& codes,
                                    std::span<const int> phonemes, std::span<const int> durations,
                                    int speaker_id);

struct ReconstructOptions {
  std::optional<int> speaker;
  std::optional<std::vector<std::vector<int>>> codes;  // [level][position]
  bool bypass_quantizer = false;
  /// Decode only the first n levels (0 = all).
  int max_levels = 0;
};

signal::MelSpectrogram reconstruct(const Model& m, const corpus::Utterance& u, const ReconstructOptions& opts = {});

}  // namespace prvq::model
