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
#include <cmath>

#include "prvq/error.hpp"
#include "prvq/model.hpp"

namespace prvq::model {

using ad::Var;

void ModelConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ContractError(std::string("model.") + what);
  };
  need(model_dim > 0, "model_dim must be positive");
  need(heads > 0 && model_dim % heads == 0, "model_dim must be divisible by heads");
  need(layers >= 0, "layers must be >= 0");
  need(conv_kernel > 0 && conv_kernel % 2 == 1, "conv_kernel must be a positive odd number");
  need(ffn_multiplier > 0, "ffn_multiplier must be positive");
  need(code_dim > 0, "code_dim must be positive");
  need(mel_bands > 0, "mel_bands must be positive");
  need(num_speakers > 0, "num_speakers must be positive");
  need(vocab_size >= 2, "vocab_size must be >= 2");
  need(sigma_policy == SigmaPolicy::kDuration || sigma > 0.0, "sigma must be positive");
  if (quantization == Quantization::kRvq) {
    need(levels >= 1, "levels must be >= 1 when quantization = rvq");
    need(codebook_size >= 2, "codebook_size must be >= 2");
  }
}

const char* to_string(SigmaPolicy p) {
  switch (p) {
    case SigmaPolicy::kDuration: return "duration";
    case SigmaPolicy::kFixed: return "fixed";
    case SigmaPolicy::kLearnable: return "learnable";
  }
  return "?";
}

const char* to_string(Quantization q) { return q == Quantization::kRvq ? "rvq" : "none"; }

SigmaPolicy parse_sigma_policy(const std::string& s) {
  if (s == "duration") return SigmaPolicy::kDuration;
  if (s == "fixed") return SigmaPolicy::kFixed;
  if (s == "learnable") return SigmaPolicy::kLearnable;
  throw ConfigError("model.sigma_policy: expected duration, fixed or learnable, got '" + s + "'");
}

Quantization parse_quantization(const std::string& s) {
  if (s == "rvq") return Quantization::kRvq;
  if (s == "none") return Quantization::kNone;
  throw ConfigError("model.quantization: expected rvq or none, got '" + s + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

// ---- initialisation -----------------------------------------------------

namespace {

Tensor normal_tensor(std::size_t r, std::size_t c, double sd, rnd::Engine& rng) {
  Tensor t(r, c);
  for (auto& v : t.values()) v = sd * rnd::normal(rng);
  return t;
}

void add_linear(ad::NamedTensors& p, const std::string& name, int in, int out, rnd::Engine& rng, double gain = 1.0) {
  p[name + ".w"] = normal_tensor(std::size_t(in), std::size_t(out), gain / std::sqrt(double(in)), rng);
  p[name + ".b"] = Tensor(1, std::size_t(out));
}

void add_norm(ad::NamedTensors& p, const std::string& name, int dim) {
  p[name + ".g"] = Tensor(1, std::size_t(dim), 1.0);
  p[name + ".b"] = Tensor(1, std::size_t(dim));
}

void add_conformer(ad::NamedTensors& p, const ModelConfig& c, const std::string& prefix, rnd::Engine& rng) {
  const int d = c.model_dim, f = c.model_dim * c.ffn_multiplier;
  for (int l = 0; l < c.layers; ++l) {
    const std::string b = prefix + "." + std::to_string(l);
    for (const char* ffn : {".ffn1", ".ffn2"}) {
      add_norm(p, b + ffn + ".ln", d);
      add_linear(p, b + ffn + ".fc1", d, f, rng);
      add_linear(p, b + ffn + ".fc2", f, d, rng);
    }
    add_norm(p, b + ".att.ln", d);
    for (const char* proj : {".att.q", ".att.k", ".att.v", ".att.out"}) add_linear(p, b + proj, d, d, rng);
    add_norm(p, b + ".conv.ln", d);
    add_linear(p, b + ".conv.pw1", d, 2 * d, rng);
    p[b + ".conv.dw.k"] = normal_tensor(std::size_t(c.conv_kernel), std::size_t(d), 1.0 / std::sqrt(double(c.conv_kernel)), rng);
    p[b + ".conv.dw.b"] = Tensor(1, std::size_t(d));
    add_norm(p, b + ".conv.norm", d);
    add_linear(p, b + ".conv.pw2", d, d, rng);
    add_norm(p, b + ".out", d);
  }
}

}  // namespace

Model init_model(const ModelConfig& cfg, rnd::Engine& rng, double rvq_decay, double rvq_epsilon, double beta) {
  cfg.validate();
  Model m;
  m.config = cfg;
  const int d = cfg.model_dim;
  m.params["phoneme_embedding"] = normal_tensor(std::size_t(cfg.vocab_size), std::size_t(d), 1.0, rng);
  m.params["speaker_embedding"] = normal_tensor(std::size_t(cfg.num_speakers), std::size_t(d), 0.1, rng);
  add_conformer(m.params, cfg, "phoneme_encoder", rng);
  add_linear(m.params, "mel_in", cfg.mel_bands, d, rng);
  add_conformer(m.params, cfg, "mel_encoder", rng);
  add_linear(m.params, "latent_out", d, cfg.code_dim, rng);
  add_linear(m.params, "latent_in", cfg.code_dim, d, rng);
  add_conformer(m.params, cfg, "decoder", rng);
  add_linear(m.params, "mel_out", d, cfg.mel_bands, rng, 0.5);
  if (cfg.sigma_policy == SigmaPolicy::kLearnable) m.params["log_sigma"] = Tensor(1, 1, std::log(cfg.sigma));
  if (cfg.quantization == Quantization::kRvq) {
    m.rvq = vq::RVQ(std::size_t(cfg.levels), std::size_t(cfg.codebook_size), std::size_t(cfg.code_dim), rvq_decay,
                    rvq_epsilon, beta);
  }
  m.mel_mean = Tensor(1, std::size_t(cfg.mel_bands));
  m.mel_std = Tensor(1, std::size_t(cfg.mel_bands), 1.0);
  return m;
}

void fit_normalizer(Model& m, std::span<const corpus::Utterance> utterances) {
  const std::size_t bands = std::size_t(m.config.mel_bands);
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(Eigen::Index(bands));
  Eigen::RowVectorXd sq = sum;
  double n = 0.0;
  for (const auto& u : utterances) {
    if (u.mel.bands() != bands) throw ShapeError("fit_normalizer: utterance " + u.id + " has wrong band count");
    sum += u.mel.values.map().colwise().sum();
    n += double(u.mel.frames());
  }
  if (n == 0.0) throw ContractError("fit_normalizer: no frames");
  const Eigen::RowVectorXd mean = sum / n;
  for (const auto& u : utterances) sq += (u.mel.values.map().rowwise() - mean).array().square().matrix().colwise().sum();
  for (std::size_t b = 0; b < bands; ++b) {
    m.mel_mean[b] = mean[Eigen::Index(b)];
    m.mel_std[b] = std::max(std::sqrt(sq[Eigen::Index(b)] / n), 1e-3);
  }
}

// ---- binder -------------------------------------------------------------

Binder::Binder(ad::Graph& g, const ad::NamedTensors& params, bool trainable)
    : g_(g), params_(params), trainable_(trainable) {}

Var Binder::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("model: missing parameter '" + name + "'");
  Var v = trainable_ ? g_.leaf(it->second) : g_.constant(it->second);
  bound_.emplace(name, v);
  return v;
}

void Binder::override_with(const std::string& name, Var v) { bound_[name] = v; }

ad::NamedTensors Binder::grads() const {
  ad::NamedTensors out;
  for (const auto& [name, v] : bound_) {
    if (params_.count(name) && g_.requires_grad(v)) out.emplace(name, g_.grad(v));
  }
  return out;
}

// ---- conformer ----------------------------------------------------------

namespace {

Var norm(Binder& p, const std::string& name, Var x) { return ad::layer_norm(x, p(name + ".g"), p(name + ".b")); }

Var dense(Binder& p, const std::string& name, Var x) { return ad::linear(x, p(name + ".w"), p(name + ".b")); }

Var feed_forward(Binder& p, const std::string& name, Var x) {
  Var h = norm(p, name + ".ln", x);
  h = ad::swish(dense(p, name + ".fc1", h));
  return dense(p, name + ".fc2", h);
}

Var self_attention(Binder& p, const ModelConfig& c, const std::string& name, Var x, const Tensor* key_mask) {
  Var h = norm(p, name + ".ln", x);
  Var q = dense(p, name + ".q", h);
  Var k = dense(p, name + ".k", h);
  Var v = dense(p, name + ".v", h);
  const std::size_t dh = std::size_t(c.model_dim / c.heads);
  const double scale = 1.0 / std::sqrt(double(dh));
  std::vector<Var> heads;
  for (int i = 0; i < c.heads; ++i) {
    const std::size_t off = std::size_t(i) * dh;
    Var scores = ad::scale(ad::matmul(ad::slice_cols(q, off, dh), ad::transpose(ad::slice_cols(k, off, dh))), scale);
    if (key_mask) scores = ad::add(scores, p.graph().constant(*key_mask));
    heads.push_back(ad::matmul(ad::softmax(scores, 1), ad::slice_cols(v, off, dh)));
  }
  Var cat = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  return dense(p, name + ".out", cat);
}

Var conv_module(Binder& p, const ModelConfig& c, const std::string& name, Var x, const std::vector<bool>* keep) {
  const std::size_t d = std::size_t(c.model_dim);
  Var h = dense(p, name + ".pw1", norm(p, name + ".ln", x));
  h = ad::mul(ad::slice_cols(h, 0, d), ad::sigmoid(ad::slice_cols(h, d, d)));
  if (keep) h = ad::masked_fill(h, *keep, 0.0);
  h = ad::conv1d_depthwise(h, p(name + ".dw.k"), p(name + ".dw.b"));
  h = ad::swish(norm(p, name + ".norm", h));
  return dense(p, name + ".pw2", h);
}

}  // namespace

Var conformer(Binder& p, const ModelConfig& c, const std::string& prefix, Var x, const std::vector<bool>* keep) {
  if (keep && keep->size() != x.rows()) throw ShapeError("conformer: mask length does not match sequence");
  if (keep && std::all_of(keep->begin(), keep->end(), [](bool b) { return b; })) keep = nullptr;
  Tensor key_mask;
  if (keep) {
    key_mask = Tensor(x.rows(), x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.rows(); ++j) {
        if (!(*keep)[j]) key_mask(i, j) = -1e9;
      }
    }
  }
  for (int l = 0; l < c.layers; ++l) {
    const std::string b = prefix + "." + std::to_string(l);
    x = ad::add(x, ad::scale(feed_forward(p, b + ".ffn1", x), 0.5));
    x = ad::add(x, self_attention(p, c, b + ".att", x, keep ? &key_mask : nullptr));
    x = ad::add(x, conv_module(p, c, b + ".conv", x, keep));
    x = ad::add(x, ad::scale(feed_forward(p, b + ".ffn2", x), 0.5));
    x = norm(p, b + ".out", x);
  }
  return x;
}

// ---- codec --------------------------------------------------------------

namespace {

void check_speaker(const Model& m, int speaker) {
  if (speaker < 0 || speaker >= m.config.num_speakers) {
    throw ContractError("speaker ID " + std::to_string(speaker) + " outside [0, " +
                        std::to_string(m.config.num_speakers) + ")");
  }
}

Tensor normalize_mel(const Model& m, const Tensor& mel) {
  if (mel.cols() != std::size_t(m.config.mel_bands)) {
    throw ShapeError("model expects " + std::to_string(m.config.mel_bands) + " mel bands, got " + mel.shape_string());
  }
  Tensor out = mel;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    for (std::size_t b = 0; b < out.cols(); ++b) out(t, b) = (out(t, b) - m.mel_mean[b]) / m.mel_std[b];
  }
  return out;
}

signal::MelSpectrogram as_mel(Tensor values) {
  signal::MelSpectrogram mel;
  mel.values = std::move(values);
  return mel;
}

}  // namespace

Var linguistic_features(Binder& p, const Model& m, std::span<const int> phonemes, const std::vector<bool>* keep) {
  if (phonemes.empty()) throw ContractError("phoneme_encode: empty phoneme sequence");
  for (int id : phonemes) {
    if (id < 0 || id >= m.config.vocab_size) {
      throw ContractError("phoneme ID " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(m.config.vocab_size));
    }
  }
  Var x = ad::embedding(p("phoneme_embedding"), phonemes);
  return conformer(p, m.config, "phoneme_encoder", x, keep);
}

Var resample_weights(Binder& p, const Model& m, std::span<const int> durations, std::size_t frames) {
  if (m.config.sigma_policy != SigmaPolicy::kLearnable) {
    return p.graph().constant(gaussian_weights(durations, frames, m.config.sigma_policy, m.config.sigma).w);
  }
  const auto base = gaussian_weights(durations, frames, SigmaPolicy::kFixed, 1.0);
  Tensor logits(frames, durations.size());
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < durations.size(); ++i) {
      const double z = double(t) + 0.5 - base.centers[i];
      logits(t, i) = -0.5 * z * z;
    }
  }
  Var inv_var = ad::exp(ad::scale(p("log_sigma"), -2.0));
  return ad::softmax(ad::scale_by(p.graph().constant(std::move(logits)), inv_var), 1);
}

Var encode_latent(Binder& p, const Model& m, const Tensor& mel, Var weights, Var ling) {
  if (weights.rows() != mel.rows()) throw ShapeError("encoder: mel frames do not match resampling weights");
  Var down = ad::normalize_rows(ad::transpose(weights));
  Var x = ad::matmul(down, p.graph().constant(normalize_mel(m, mel)));
  x = ad::add(dense(p, "mel_in", x), ling);
  x = conformer(p, m.config, "mel_encoder", x);
  return dense(p, "latent_out", x);
}

Var decode_latent(Binder& p, const Model& m, Var q, Var ling, int speaker, Var weights) {
  check_speaker(m, speaker);
  if (q.rows() != ling.rows() || q.cols() != std::size_t(m.config.code_dim)) {
    throw ShapeError("decoder: latent " + q.value().shape_string() + " for " + std::to_string(ling.rows()) + " phonemes");
  }
  const int ids[] = {speaker};
  Var h = ad::add(dense(p, "latent_in", q), ling);
  h = ad::add_row(h, ad::embedding(p("speaker_embedding"), ids));
  h = ad::matmul(weights, h);
  h = conformer(p, m.config, "decoder", h);
  Var y = dense(p, "mel_out", h);
  ad::Graph& g = p.graph();
  return ad::add_row(ad::mul_row(y, g.constant(m.mel_std)), g.constant(m.mel_mean));
}

TrainForward forward(Binder& p, const Model& m, const corpus::Utterance& u, bool bypass) {
  u.validate(std::size_t(m.config.vocab_size));
  TrainForward out;
  Var ling = linguistic_features(p, m, u.phonemes);
  Var w = resample_weights(p, m, u.durations, u.num_frames());
  out.latent = encode_latent(p, m, u.mel.values, w, ling);
  Var q = out.latent;
  if (!bypass && m.config.quantization == Quantization::kRvq) {
    auto r = vq::rvq_forward(m.rvq, out.latent);
    q = r.output;
    out.commitment = r.commitment;
    out.rvq = std::move(r.result);
  }
  out.mel = decode_latent(p, m, q, ling, u.speaker_id, w);
  return out;
}

// ---- inference ----------------------------------------------------------

Tensor phoneme_encode(const Model& m, std::span<const int> phonemes, const std::vector<bool>& keep) {
  if (keep.size() != phonemes.size()) throw ShapeError("phoneme_encode: mask length does not match phonemes");
  ad::Graph g;
  Binder p(g, m.params, false);
  return linguistic_features(p, m, phonemes, &keep).value();
}

Tensor encode_continuous(const Model& m, const corpus::Utterance& u) {
  u.validate(std::size_t(m.config.vocab_size));
  ad::Graph g;
  Binder p(g, m.params, false);
  Var ling = linguistic_features(p, m, u.phonemes);
  Var w = resample_weights(p, m, u.durations, u.num_frames());
  return encode_latent(p, m, u.mel.values, w, ling).value();
}

vq::CodeSequence encode_utterance(const Model& m, const corpus::Utterance& u) {
  if (m.config.quantization != Quantization::kRvq) throw ContractError("encode_utterance: model has no quantizer");
  return vq::rvq_quantize(m.rvq, encode_continuous(m, u)).sequence;
}

signal::MelSpectrogram decode_vectors(const Model& m, const Tensor& q, std::span<const int> phonemes,
                                      std::span<const int> durations, int speaker_id) {
  if (q.rows() != phonemes.size() || durations.size() != phonemes.size()) {
    throw ContractError("decode: " + std::to_string(q.rows()) + " latent vectors, " + std::to_string(phonemes.size()) +
                        " phonemes, " + std::to_string(durations.size()) + " durations");
  }
  long frames = 0;
  for (int d : durations) frames += d;
  ad::Graph g;
  Binder p(g, m.params, false);
  Var ling = linguistic_features(p, m, phonemes);
  Var w = resample_weights(p, m, durations, std::size_t(std::max(frames, 0L)));
  return as_mel(decode_latent(p, m, g.constant(q), ling, speaker_id, w).value());
}

signal::MelSpectrogram decode_codes(const Model& m, const std::vector<std::vector<int>>& codes,
                                    std::span<const int> phonemes, std::span<const int> durations, int speaker_id) {
  if (m.config.quantization != Quantization::kRvq) throw ContractError("decode_codes: model has no quantizer");
  for (const auto& level : codes) {
    if (level.size() != phonemes.size()) {
      throw ContractError("decode_codes: " + std::to_string(level.size()) + " codes for " +
                          std::to_string(phonemes.size()) + " phonemes");
    }
  }
  return decode_vectors(m, vq::lookup(m.rvq, codes), phonemes, durations, speaker_id);
}

signal::MelSpectrogram reconstruct(const Model& m, const corpus::Utterance& u, const ReconstructOptions& opts) {
  const int speaker = opts.speaker.value_or(u.speaker_id);
  check_speaker(m, speaker);
  const bool bypass = opts.bypass_quantizer || m.config.quantization == Quantization::kNone;
  if (bypass && (opts.codes || opts.max_levels > 0)) {
    throw ContractError("reconstruct: code overrides need the quantizer");
  }
  signal::MelSpectrogram out;
  if (bypass) {
    out = decode_vectors(m, encode_continuous(m, u), u.phonemes, u.durations, speaker);
  } else {
    std::vector<std::vector<int>> codes = opts.codes ? *opts.codes : encode_utterance(m, u).codes;
    if (codes.size() != m.rvq.num_levels()) {
      throw ContractError("reconstruct: " + std::to_string(codes.size()) + " code levels for a " +
                          std::to_string(m.rvq.num_levels()) + "-level quantizer");
    }
    if (opts.max_levels > 0 && std::size_t(opts.max_levels) < codes.size()) {
      vq::RVQ partial = m.rvq;
      partial.levels.resize(std::size_t(opts.max_levels));
      codes.resize(std::size_t(opts.max_levels));
      for (const auto& level : codes) {
        if (level.size() != u.num_phonemes()) throw ContractError("reconstruct: code override length mismatch");
      }
      out = decode_vectors(m, vq::lookup(partial, codes), u.phonemes, u.durations, speaker);
    } else {
      out = decode_codes(m, codes, u.phonemes, u.durations, speaker);
    }
  }
  out.hop_length = u.mel.hop_length;
  out.n_fft = u.mel.n_fft;
  out.sample_rate = u.mel.sample_rate;
  return out;
}

}  // namespace prvq::model
