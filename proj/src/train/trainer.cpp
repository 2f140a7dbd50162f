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

#include "prvq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "prvq/binary_io.hpp"
#include "prvq/config.hpp"
#include "prvq/error.hpp"

namespace prvq::train {

using ad::Var;
using model::Model;

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ContractError(std::string("train.") + what);
  };
  need(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be finite and >= 0");
  need(warmup_steps >= 1, "warmup_steps must be >= 1");
  need(final_lr_ratio >= 0.0 && final_lr_ratio <= 1.0, "final_lr_ratio must be in [0, 1]");
  need(batch_size >= 1, "batch_size must be positive");
  need(max_steps >= 0, "max_steps must be >= 0");
  need(commitment_weight >= 0.0, "commitment_weight must be >= 0");
  need(ema_decay >= 0.0 && ema_decay < 1.0, "ema_decay must be in [0, 1)");
  need(ema_epsilon >= 0.0, "ema_epsilon must be >= 0");
  need(eval_every >= 1, "eval_every must be positive");
  need(checkpoint_every >= 1, "checkpoint_every must be positive");
  need(clip_norm > 0.0, "clip_norm must be positive");
  need(dead_code_threshold >= 0.0, "dead_code_threshold must be >= 0");
}

const char* to_string(LrSchedule s) { return s == LrSchedule::kConstant ? "constant" : "cosine"; }

LrSchedule parse_lr_schedule(const std::string& s) {
  if (s == "constant") return LrSchedule::kConstant;
  if (s == "cosine") return LrSchedule::kCosine;
  throw ConfigError("unknown lr_schedule '" + s + "' (expected constant or cosine)");
}

double learning_rate_at(const TrainConfig& c, long step) {
  const double warm = std::min(1.0, double(step + 1) / double(c.warmup_steps));
  if (c.lr_schedule == LrSchedule::kConstant || step < c.warmup_steps) return c.learning_rate * warm;
  const double span = double(std::max<long>(c.max_steps - c.warmup_steps, 1));
  const double t = std::min(1.0, double(step - c.warmup_steps) / span);
  const double k = c.final_lr_ratio + (1.0 - c.final_lr_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  return c.learning_rate * k;
}

LossParts mel_loss(std::span<const Tensor> predictions, std::span<const Tensor> targets) {
  if (predictions.size() != targets.size()) throw ShapeError("mel_loss: prediction and target counts differ");
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!predictions[i].same_shape(targets[i])) {
      throw ShapeError("mel_loss: item " + std::to_string(i) + " " + predictions[i].shape_string() + " vs " +
                       targets[i].shape_string());
    }
    const auto e = (predictions[i].map() - targets[i].map()).array();
    abs_sum += e.abs().sum();
    sq_sum += e.square().sum();
    cells += targets[i].size();
  }
  if (cells == 0) throw ContractError("mel_loss: no cells");
  LossParts p;
  p.l1 = abs_sum / double(cells);
  p.l2 = sq_sum / double(cells);
  p.total = p.l1 + p.l2;
  return p;
}

namespace {

// Per-utterance share of the batch loss. Cell terms are divided by the batch's
// total cell count and the commitment by its share of phoneme positions, so
// summing over utterances yields batch means.
struct Terms {
  Var loss;
  double l1 = 0.0, l2 = 0.0, distortion = 0.0;
  std::optional<vq::RvqResult> rvq;
};

Terms utterance_terms(model::Binder& p, const Model& m, const corpus::Utterance& u, double cell_scale,
                      double position_share) {
  auto out = model::forward(p, m, u);
  ad::Graph& g = p.graph();
  Var err = ad::sub(out.mel, g.constant(u.mel.values));
  Var l1 = ad::scale(ad::sum(ad::abs(err)), cell_scale);
  Var l2 = ad::scale(ad::sum(ad::square(err)), cell_scale);
  Terms t;
  t.loss = ad::add(l1, l2);
  t.l1 = l1.value()[0];
  t.l2 = l2.value()[0];
  if (out.rvq) {
    t.loss = ad::add(t.loss, ad::scale(out.commitment, position_share));
    t.distortion = position_share * out.rvq->distortion;
    t.rvq = std::move(out.rvq);
  }
  if (!std::isfinite(t.loss.value()[0])) throw NumericError("non-finite loss for utterance " + u.id);
  return t;
}

struct BatchShape {
  double cell_scale = 0.0;
  std::vector<double> position_share;
};

BatchShape batch_shape(std::span<const corpus::Utterance> batch) {
  if (batch.empty()) throw ContractError("empty batch");
  std::size_t cells = 0, positions = 0;
  for (const auto& u : batch) {
    cells += u.mel.values.size();
    positions += u.phonemes.size();
  }
  if (cells == 0 || positions == 0) throw ContractError("batch has no frames");
  BatchShape s;
  s.cell_scale = 1.0 / double(cells);
  for (const auto& u : batch) s.position_share.push_back(double(u.phonemes.size()) / double(positions));
  return s;
}

void finish_parts(LossParts& p, double beta) { p.total = p.l1 + p.l2 + beta * p.commitment; }

Tensor stack_rows(const std::vector<const Tensor*>& parts) {
  std::size_t rows = 0, cols = parts.empty() ? 0 : parts.front()->cols();
  for (const auto* t : parts) rows += t->rows();
  Tensor out(rows, cols);
  auto dst = out.values().begin();
  for (const auto* t : parts) dst = std::copy(t->values().begin(), t->values().end(), dst);
  return out;
}

double commitment_weight(const Model& m) {
  return m.rvq.levels.empty() ? 0.0 : m.rvq.commitment_weight;
}

}  // namespace

LossParts compute_loss(const Model& m, std::span<const corpus::Utterance> utterances) {
  const auto shape = batch_shape(utterances);
  LossParts parts;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    ad::Graph g;
    model::Binder p(g, m.params, false);
    auto t = utterance_terms(p, m, utterances[i], shape.cell_scale, shape.position_share[i]);
    parts.l1 += t.l1;
    parts.l2 += t.l2;
    parts.commitment += t.distortion;
  }
  finish_parts(parts, commitment_weight(m));
  return parts;
}

LossParts compute_loss(const Model& m, const corpus::Batch& batch) {
  const auto utts = corpus::unbatch(batch);
  return compute_loss(m, std::span<const corpus::Utterance>(utts));
}

TrainState init_training(const model::ModelConfig& mc, const TrainConfig& tc,
                         std::span<const corpus::Utterance> train_set) {
  tc.validate();
  mc.validate();
  if (train_set.empty()) throw ContractError("training set is empty");
  TrainState s;
  s.config = tc;
  s.rng.seed(tc.seed);
  s.model = model::init_model(mc, s.rng, tc.ema_decay, tc.ema_epsilon, tc.commitment_weight);
  model::fit_normalizer(s.model, train_set);
  return s;
}

std::vector<std::size_t> next_batch(TrainState& s, std::size_t corpus_size) {
  if (corpus_size == 0) throw ContractError("next_batch: empty corpus");
  const std::size_t b = std::min<std::size_t>(std::size_t(s.config.batch_size), corpus_size);
  if (s.order.size() != corpus_size || s.cursor + b > corpus_size) {
    s.order.resize(corpus_size);
    for (std::size_t i = 0; i < corpus_size; ++i) s.order[i] = i;
    for (std::size_t i = corpus_size; i > 1; --i) std::swap(s.order[i - 1], s.order[rnd::index(s.rng, i)]);
    s.cursor = 0;
  }
  std::vector<std::size_t> out(s.order.begin() + long(s.cursor), s.order.begin() + long(s.cursor + b));
  s.cursor += b;
  return out;
}

StepResult train_step(TrainState& s, std::span<const corpus::Utterance> batch) {
  StepResult r;
  const auto shape = batch_shape(batch);
  const TrainConfig& tc = s.config;
  const bool quantized = s.model.config.quantization == model::Quantization::kRvq;
  r.learning_rate = learning_rate_at(tc, s.step);

  // All mutations happen on copies and are committed at the end.
  rnd::Engine rng = s.rng;
  std::optional<Model> seeded;
  const Model* m = &s.model;
  try {
    if (quantized && !s.model.rvq.initialized()) {
      seeded = s.model;
      std::vector<Tensor> latents;
      for (const auto& u : batch) latents.push_back(model::encode_continuous(s.model, u));
      std::vector<const Tensor*> ptrs;
      for (const auto& t : latents) ptrs.push_back(&t);
      vq::kmeans_init(seeded->rvq, stack_rows(ptrs), rng);
      m = &*seeded;
    }

    ad::NamedTensors grads;
    std::vector<vq::RvqResult> results;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ad::Graph g;
      model::Binder p(g, m->params, true);
      auto t = utterance_terms(p, *m, batch[i], shape.cell_scale, shape.position_share[i]);
      r.loss.l1 += t.l1;
      r.loss.l2 += t.l2;
      r.loss.commitment += t.distortion;
      g.backward(t.loss);
      for (auto& [name, gr] : p.grads()) {
        auto [it, fresh] = grads.try_emplace(name, std::move(gr));
        if (!fresh) it->second.map() += gr.map();
      }
      if (t.rvq) results.push_back(std::move(*t.rvq));
    }
    finish_parts(r.loss, commitment_weight(*m));

    r.grad_norm = ad::global_norm(grads);
    if (!std::isfinite(r.grad_norm)) throw NumericError("non-finite gradient norm");
    if (r.grad_norm > tc.clip_norm) {
      const double k = tc.clip_norm / r.grad_norm;
      for (auto& [name, gr] : grads) gr.map() *= k;
    }

    vq::RVQ rvq = m->rvq;
    if (quantized) {
      for (std::size_t l = 0; l < rvq.levels.size(); ++l) {
        std::vector<int> codes;
        std::vector<const Tensor*> inputs;
        for (const auto& res : results) {
          codes.insert(codes.end(), res.sequence.codes[l].begin(), res.sequence.codes[l].end());
          inputs.push_back(&res.level_inputs[l]);
        }
        const Tensor x = stack_rows(inputs);
        vq::ema_update(rvq.levels[l], codes, x);
        if (tc.dead_code_threshold > 0.0) {
          r.reinitialised += vq::reinit_dead_codes(rvq.levels[l], x, tc.dead_code_threshold, rng);
        }
      }
      std::vector<vq::CodeSequence> seqs;
      for (const auto& res : results) seqs.push_back(res.sequence);
      r.usage = vq::usage_stats(seqs, rvq.codebook_size()).usage;
    }

    ad::NamedTensors params = m->params;
    ad::AdamState adam = s.optimizer;
    ad::adam_step(params, grads, adam, r.learning_rate);

    s.model.params = std::move(params);
    s.model.rvq = std::move(rvq);
    s.optimizer = std::move(adam);
    s.rng = rng;
  } catch (const NumericError& e) {
    r = StepResult{};
    r.skipped = true;
    r.skip_reason = e.what();
    ++s.skipped_steps;
  }
  r.step = ++s.step;
  return r;
}

std::string log_line(const StepResult& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["l1"] = r.loss.l1;
  j["l2"] = r.loss.l2;
  j["commit"] = r.loss.commitment;
  j["usage_l1"] = r.usage.size() > 0 ? nlohmann::ordered_json(r.usage[0]) : nlohmann::ordered_json();
  j["usage_l2"] = r.usage.size() > 1 ? nlohmann::ordered_json(r.usage[1]) : nlohmann::ordered_json();
  if (r.skipped) j["skipped"] = r.skip_reason;
  return j.dump();
}

metrics::MetricReport evaluate(const Model& m, std::span<const corpus::Utterance> eval_set, int max_levels) {
  if (eval_set.empty()) throw ContractError("evaluate: empty evaluation set");
  model::ReconstructOptions opts;
  opts.max_levels = max_levels;
  double abs_sum = 0.0, psnr_sum = 0.0;
  std::size_t cells = 0;
  for (const auto& u : eval_set) {
    const auto hyp = model::reconstruct(m, u, opts);
    abs_sum += (hyp.values.map() - u.mel.values.map()).cwiseAbs().sum();
    cells += u.mel.values.size();
    psnr_sum += metrics::psnr_mel(u.mel, hyp);
  }
  metrics::MetricReport rep;
  rep.l1 = abs_sum / double(cells);
  rep.psnr = psnr_sum / double(eval_set.size());
  return rep;
}

// ---- checkpoints --------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'R', 'V', 'Q', 'C', 'K', 'P', 'T'};

struct ArrayTable {
  std::vector<std::pair<std::string, const Tensor*>> items;
  void add(std::string name, const Tensor& t) { items.emplace_back(std::move(name), &t); }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  const TrainState& s = c.state;
  const Model& m = s.model;
  std::vector<Tensor> owned;  // ema counts as 1 x K tensors
  owned.reserve(m.rvq.levels.size());
  for (const auto& book : m.rvq.levels) owned.push_back(Tensor::row_vector(book.ema_count));

  ArrayTable table;
  for (const auto& [name, t] : m.params) table.add("param/" + name, t);
  for (const auto& [name, t] : s.optimizer.m) table.add("adam.m/" + name, t);
  for (const auto& [name, t] : s.optimizer.v) table.add("adam.v/" + name, t);
  for (std::size_t l = 0; l < m.rvq.levels.size(); ++l) {
    const std::string p = "rvq/" + std::to_string(l) + "/";
    table.add(p + "entries", m.rvq.levels[l].entries);
    table.add(p + "ema_sum", m.rvq.levels[l].ema_sum);
    table.add(p + "ema_count", owned[l]);
  }
  table.add("norm/mean", m.mel_mean);
  table.add("norm/std", m.mel_std);

  config::Json h;
  h["model"] = config::to_json(m.config);
  h["train"] = config::to_json(s.config);
  h["features"] = config::to_json(c.features);
  h["vocab"] = c.vocab.symbols();
  h["speakers"] = c.speakers;
  config::Json q;
  q["decay"] = m.rvq.levels.empty() ? 0.0 : m.rvq.levels[0].decay;
  q["epsilon"] = m.rvq.levels.empty() ? 0.0 : m.rvq.levels[0].epsilon;
  q["commitment_weight"] = m.rvq.commitment_weight;
  std::vector<bool> init;
  for (const auto& b : m.rvq.levels) init.push_back(b.initialized);
  q["initialized"] = init;
  h["rvq"] = q;
  std::ostringstream rng;
  rng << s.rng;
  config::Json st;
  st["step"] = s.step;
  st["skipped_steps"] = s.skipped_steps;
  st["best_eval"] = std::isfinite(s.best_eval) ? config::Json(s.best_eval) : config::Json();
  st["adam_step"] = s.optimizer.step;
  st["rng"] = rng.str();
  st["order"] = s.order;
  st["cursor"] = s.cursor;
  h["state"] = st;
  config::Json arrays = config::Json::array();
  for (const auto& [name, t] : table.items) arrays.push_back({name, t->rows(), t->cols()});
  h["arrays"] = arrays;
  const std::string header = h.dump();

  io::ByteWriter w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kMagic), sizeof kMagic});
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(header.size());
  w.put_string(header);
  for (const auto& [name, t] : table.items) w.put_doubles(t->values());
  w.put<std::uint64_t>(io::fnv1a64(w.bytes()));
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.get_string(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic)) {
    throw DecodeError("not a checkpoint file", 0);
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw DecodeError("checkpoint format version: expected " + std::to_string(kCheckpointVersion) + ", found " +
                          std::to_string(version),
                      8);
  }
  if (bytes.size() < 8) throw DecodeError("checkpoint truncated", bytes.size());
  const std::uint64_t stored = [&] {
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + bytes.size() - 8, 8);
    return v;
  }();
  const auto header_len = r.get<std::uint64_t>("header length");
  if (header_len > r.remaining()) throw DecodeError("checkpoint truncated in header", r.position());
  const std::size_t header_at = r.position();
  config::Json h;
  try {
    h = config::Json::parse(r.get_string(header_len, "header"));
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("checkpoint header is not valid JSON: ") + e.what(), header_at);
  }

  Checkpoint c;
  try {
    TrainState& s = c.state;
    Model& m = s.model;
    config::from_json(h.at("model"), m.config);
    config::from_json(h.at("train"), s.config);
    config::from_json(h.at("features"), c.features);
    c.vocab = corpus::PhonemeVocab::from_symbols(h.at("vocab").get<std::vector<std::string>>());
    c.speakers = h.at("speakers").get<std::vector<std::string>>();
    const auto& q = h.at("rvq");
    if (m.config.quantization == model::Quantization::kRvq) {
      m.rvq = vq::RVQ(std::size_t(m.config.levels), std::size_t(m.config.codebook_size), std::size_t(m.config.code_dim),
                      q.at("decay").get<double>(), q.at("epsilon").get<double>(), q.at("commitment_weight").get<double>());
      const auto init = q.at("initialized").get<std::vector<bool>>();
      if (init.size() != m.rvq.levels.size()) throw DecodeError("checkpoint: codebook count mismatch", header_at);
      for (std::size_t l = 0; l < init.size(); ++l) m.rvq.levels[l].initialized = init[l];
    }
    const auto& st = h.at("state");
    s.step = st.at("step").get<long>();
    s.skipped_steps = st.at("skipped_steps").get<long>();
    s.best_eval = st.at("best_eval").is_null() ? std::numeric_limits<double>::infinity() : st.at("best_eval").get<double>();
    s.optimizer.step = st.at("adam_step").get<long>();
    std::istringstream rng(st.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw DecodeError("checkpoint: bad RNG state", header_at);
    s.order = st.at("order").get<std::vector<std::size_t>>();
    s.cursor = st.at("cursor").get<std::size_t>();

    for (const auto& a : h.at("arrays")) {
      const auto name = a.at(0).get<std::string>();
      Tensor t(a.at(1).get<std::size_t>(), a.at(2).get<std::size_t>());
      r.get_doubles(t.values(), "array payload");
      const auto slash = name.find('/');
      const std::string group = name.substr(0, slash), rest = name.substr(slash + 1);
      if (group == "param") {
        m.params.emplace(rest, std::move(t));
      } else if (group == "adam.m") {
        s.optimizer.m.emplace(rest, std::move(t));
      } else if (group == "adam.v") {
        s.optimizer.v.emplace(rest, std::move(t));
      } else if (group == "norm") {
        (rest == "mean" ? m.mel_mean : m.mel_std) = std::move(t);
      } else if (group == "rvq") {
        const auto l = std::stoul(rest.substr(0, rest.find('/')));
        const std::string field = rest.substr(rest.find('/') + 1);
        if (l >= m.rvq.levels.size()) throw DecodeError("checkpoint: array for missing codebook " + name, header_at);
        auto& book = m.rvq.levels[l];
        if (field == "entries") book.entries = std::move(t);
        else if (field == "ema_sum") book.ema_sum = std::move(t);
        else book.ema_count.assign(t.values().begin(), t.values().end());
      } else {
        throw DecodeError("checkpoint: unknown array " + name, header_at);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("checkpoint header is incomplete: ") + e.what(), header_at);
  } catch (const ConfigError& e) {
    throw DecodeError(std::string("checkpoint header: ") + e.what(), header_at);
  }
  const std::size_t payload_end = r.position();
  if (r.remaining() != 8) throw DecodeError("checkpoint has trailing or missing bytes", payload_end);
  if (io::fnv1a64(bytes.first(payload_end)) != stored) throw DecodeError("checkpoint checksum mismatch", payload_end);
  const Model& m = c.state.model;
  if (m.config.quantization == model::Quantization::kRvq) m.rvq.validate();
  rnd::Engine scratch(0);
  const Model expect = model::init_model(m.config, scratch);
  if (m.params.size() != expect.params.size()) throw DecodeError("checkpoint: parameter set does not match its config", 0);
  for (const auto& [name, t] : expect.params) {
    auto it = m.params.find(name);
    if (it == m.params.end() || !it->second.same_shape(t)) {
      throw DecodeError("checkpoint: parameter " + name + " missing or misshapen", 0);
    }
  }
  if (m.mel_mean.cols() != std::size_t(m.config.mel_bands) || !m.mel_std.same_shape(m.mel_mean)) {
    throw DecodeError("checkpoint: mel normaliser does not match mel_bands", 0);
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

// ---- loop ---------------------------------------------------------------

void run_training(TrainState& s, std::span<const corpus::Utterance> train_set, const RunOptions& opts) {
  auto checkpoint = [&](const std::string& name) {
    if (!opts.checkpoint_dir) return;
    Checkpoint c{s, opts.vocab ? *opts.vocab : corpus::PhonemeVocab{}, opts.speakers ? *opts.speakers : std::vector<std::string>{},
                 opts.features};
    std::filesystem::create_directories(*opts.checkpoint_dir);
    save_checkpoint(c, *opts.checkpoint_dir / name);
  };
  std::vector<corpus::Utterance> batch;
  while (s.step < s.config.max_steps) {
    batch.clear();
    for (std::size_t i : next_batch(s, train_set.size())) batch.push_back(train_set[i]);
    const auto r = train_step(s, batch);
    if (opts.log) *opts.log << log_line(r) << '\n';
    if (opts.on_step) opts.on_step(r);
    if (!opts.eval_set.empty() && s.step % s.config.eval_every == 0) {
      const double l1 = *evaluate(s.model, opts.eval_set).l1;
      if (l1 < s.best_eval) {
        s.best_eval = l1;
        checkpoint("best.ckpt");
      }
    }
    if (s.step % s.config.checkpoint_every == 0) checkpoint("last.ckpt");
  }
  checkpoint("last.ckpt");
  if (opts.log) opts.log->flush();
}

}  // namespace prvq::train
