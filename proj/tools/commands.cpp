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
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "prvq/binary_io.hpp"
#include "prvq/metrics.hpp"
#include "prvq/random.hpp"

namespace prvq::cli {

namespace fs = std::filesystem;
using config::Json;

namespace {

// ---- files ---------------------------------------------------------------

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  io::write_file_atomic(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_json(const fs::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

void write_mel(const fs::path& p, const signal::MelSpectrogram& mel, const signal::FeatureConfig& f) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  io::write_file_atomic(p, corpus::encode_mel(mel, f.hash()));
}

void write_wav(const fs::path& p, const signal::AudioBuffer& a) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  signal::save_wav(p, a);
}

/// Utterance IDs become file names.
std::string file_stem(const std::string& id) {
  std::string s = id;
  for (char& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return s.empty() ? "_" : s;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

signal::MelSpectrogram with_features(signal::MelSpectrogram mel, const signal::FeatureConfig& f) {
  mel.hop_length = f.hop_length;
  mel.n_fft = f.n_fft;
  mel.sample_rate = f.sample_rate;
  return mel;
}

signal::AudioBuffer vocode(const signal::MelSpectrogram& mel, const signal::FeatureConfig& f) {
  return signal::invert_mel(with_features(mel, f), f.griffin_lim_iterations);
}

signal::F0Config f0_config(const signal::FeatureConfig& f) {
  signal::F0Config c;
  c.f_min = f.f0_min;
  c.f_max = f.f0_max;
  c.threshold = f.yin_threshold;
  c.frame_length = f.n_fft;
  c.hop = f.hop_length;
  return c;
}

// ---- data ----------------------------------------------------------------

struct Data {
  corpus::Manifest manifest;
  std::vector<corpus::Utterance> utterances;
};

Data load_training_data(const RunConfig& c) {
  Data d;
  d.manifest = corpus::parse_manifest(c.paths.manifest);
  d.utterances = corpus::load_utterances(d.manifest, c.features, c.paths.cache, 2, corpus::CacheMode::kReadOnly);
  return d;
}

struct Trained {
  train::Checkpoint ck;
  Data data;
  const model::Model& model() const { return ck.state.model; }
  const signal::FeatureConfig& features() const { return ck.features; }
};

fs::path default_checkpoint(const RunConfig& c) { return c.paths.checkpoints / "last.ckpt"; }

Trained load_trained(const RunConfig& c, const std::string& checkpoint) {
  const fs::path p = checkpoint.empty() ? default_checkpoint(c) : fs::path(checkpoint);
  if (!fs::exists(p)) throw DataError("checkpoint " + p.string() + " not found; run `train` first");
  Trained t;
  t.ck = train::load_checkpoint(p);
  if (t.ck.features.hash() != c.features.hash()) {
    throw DataError("checkpoint " + p.string() + " was trained with different feature settings than the config");
  }
  corpus::ManifestOptions mo;
  mo.fixed_vocab = &t.ck.vocab;
  mo.fixed_speakers = &t.ck.speakers;
  t.data.manifest = corpus::parse_manifest(c.paths.manifest, mo);
  t.data.utterances =
      corpus::load_utterances(t.data.manifest, t.ck.features, c.paths.cache, 2, corpus::CacheMode::kReadOnly);
  return t;
}

const corpus::Utterance& find_utterance(const std::vector<corpus::Utterance>& utts, const std::string& id) {
  for (const auto& u : utts) {
    if (u.id == id) return u;
  }
  throw DataError("utterance '" + id + "' is not in the manifest");
}

int resolve_speaker(const std::vector<std::string>& speakers, const std::string& s) {
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    if (speakers[i] == s) return int(i);
  }
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    const long v = std::stol(s);
    if (v >= 0 && std::size_t(v) < speakers.size()) return int(v);
  }
  throw DataError("unknown speaker '" + s + "' (" + std::to_string(speakers.size()) + " speakers in checkpoint)");
}

// ---- shared evaluation ---------------------------------------------------

struct ProsodyRow {
  double mcd = 0.0, vde = 0.0, gpe = 0.0, ffe = 0.0;
  std::size_t utterances = 0;
};

/// Mean per-utterance MCD (predicted vs. ground-truth mel) and VDE/GPE/FFE
/// (vocoded prediction vs. the recorded audio).
ProsodyRow prosody_metrics(const model::Model& m, const Data& d, const signal::FeatureConfig& f) {
  ProsodyRow row;
  const auto fc = f0_config(f);
  for (std::size_t i = 0; i < d.utterances.size(); ++i) {
    const auto& u = d.utterances[i];
    const auto pred = model::reconstruct(m, u);
    row.mcd += metrics::mcd(u.mel, pred);
    auto ref = signal::estimate_f0(signal::load_wav(d.manifest.records[i].audio), fc);
    auto hyp = signal::estimate_f0(vocode(pred, f), fc);
    const std::size_t n = std::min(ref.size(), hyp.size());
    ref.f0.resize(n), ref.voiced.resize(n), hyp.f0.resize(n), hyp.voiced.resize(n);
    const auto e = metrics::f0_errors(ref, hyp);
    row.vde += e.vde;
    row.gpe += e.gpe;
    row.ffe += e.ffe;
  }
  const double n = double(d.utterances.size());
  row.mcd /= n, row.vde /= n, row.gpe /= n, row.ffe /= n;
  row.utterances = d.utterances.size();
  return row;
}

Json prosody_json(const ProsodyRow& r) {
  return Json{{"mcd", r.mcd}, {"vde", r.vde}, {"gpe", r.gpe}, {"ffe", r.ffe}, {"utterances", r.utterances}};
}

std::string prosody_csv_row(const std::string& label, const ProsodyRow& r) {
  std::ostringstream s;
  s.precision(10);
  s << label << ',' << r.mcd << ',' << r.vde << ',' << r.gpe << ',' << r.ffe << '\n';
  return s.str();
}

double mean_psnr(const model::Model& m, const std::vector<corpus::Utterance>& utts, int max_levels) {
  model::ReconstructOptions o;
  o.max_levels = max_levels;
  double s = 0.0;
  for (const auto& u : utts) s += metrics::psnr_mel(u.mel, model::reconstruct(m, u, o));
  return s / double(utts.size());
}

std::vector<std::string> vocab_labels(const corpus::PhonemeVocab& v, const std::vector<analysis::ConditionalPMF>& p) {
  std::vector<std::string> out;
  for (const auto& x : p) out.push_back(v.symbol(x.condition));
  return out;
}

// ---- analysis inputs -----------------------------------------------------

struct Extraction {
  std::vector<corpus::Utterance> utterances;
  std::vector<vq::CodeSequence> codes;
  vq::UsageStats usage;
};

Extraction extract(const RunConfig& c, const Trained& t) {
  if (t.model().config.quantization != model::Quantization::kRvq) {
    throw ContractError("code analysis needs a quantized model; this checkpoint bypasses the quantizer");
  }
  Extraction e;
  for (std::size_t i : extraction_indices(t.data.utterances.size(), c.analysis.extraction_fraction, c.train.seed)) {
    e.utterances.push_back(t.data.utterances[i]);
  }
  for (const auto& u : e.utterances) e.codes.push_back(model::encode_utterance(t.model(), u));
  e.usage = vq::usage_stats(e.codes, t.model().rvq.codebook_size());
  return e;
}

analysis::PathOptions path_options(const AnalysisConfig& a) {
  analysis::PathOptions o;
  o.axis = a.path_axis;
  o.n_points = a.path_points;
  o.half_width = a.corridor_half_width;
  o.center = a.corridor_center;
  return o;
}

struct PathSetup {
  analysis::PCAProjection proj;
  std::vector<int> path;
  int level2 = 0;
  const corpus::Utterance* reference = nullptr;
};

PathSetup path_setup(const RunConfig& c, const Trained& t, const Extraction& e) {
  PathSetup s;
  const auto& book = t.model().rvq.levels[0];
  s.proj = analysis::pca_codes(book, e.usage.histogram[0]);
  s.path = analysis::select_path_codes(s.proj, book, path_options(c.analysis), e.usage.histogram[0]);
  if (c.analysis.probe_level2_code) {
    s.level2 = *c.analysis.probe_level2_code;
  } else if (e.usage.histogram.size() > 1) {
    s.level2 = analysis::most_frequent_code(e.usage.histogram[1]);
  }
  s.reference = c.analysis.reference_utterance.empty() ? &e.utterances.front()
                                                       : &find_utterance(t.data.utterances, c.analysis.reference_utterance);
  return s;
}

// ---- commands ------------------------------------------------------------

struct Common {
  std::string config;
  std::string checkpoint;
  bool wav = false;
};

int cmd_synth_data(const RunConfig& c, std::ostream& out) {
  auto spec = c.synth;
  spec.features = c.features;
  const auto corpus = corpus::synth_corpus(spec);
  const fs::path dir = c.paths.manifest.parent_path();
  const fs::path written = corpus::write_corpus(corpus, dir);
  if (fs::absolute(written) != fs::absolute(c.paths.manifest)) fs::rename(written, c.paths.manifest);
  std::string truth;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    truth += Json{{"id", corpus.utterances[i].id},
                  {"speaker", corpus.speakers[std::size_t(corpus.utterances[i].speaker_id)]},
                  {"pitch", corpus.pitch[i]},
                  {"gain", corpus.gain[i]}}
                 .dump() +
             "\n";
  }
  write_text(dir / "synth_truth.jsonl", truth);
  out << "wrote " << corpus.utterances.size() << " utterances and " << c.paths.manifest.string() << "\n";
  return 0;
}

int cmd_prepare(const RunConfig& c, std::ostream& out) {
  const auto m = corpus::parse_manifest(c.paths.manifest);
  const auto utts = corpus::load_utterances(m, c.features, c.paths.cache, 2, corpus::CacheMode::kReadWrite);
  std::size_t frames = 0;
  for (const auto& u : utts) frames += u.num_frames();
  write_json(c.paths.reports / "prepare.json",
             Json{{"utterances", utts.size()}, {"frames", frames}, {"phonemes", m.vocab.size() - 1},
                  {"speakers", m.speakers}, {"cache", c.paths.cache.string()}});
  out << "cached features for " << utts.size() << " utterances (" << frames << " frames)\n";
  return 0;
}

train::TrainState fresh_state(const RunConfig& c, const Data& d, model::Quantization q) {
  auto mc = c.model;
  mc.vocab_size = int(d.manifest.vocab.size());
  mc.num_speakers = int(d.manifest.speakers.size());
  mc.quantization = q;
  return train::init_training(mc, c.train, d.utterances);
}

void run_and_log(train::TrainState& st, const Data& d, const RunConfig& c, const fs::path& ckpt_dir,
                 const fs::path& log_path, bool append) {
  fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write " + log_path.string());
  train::RunOptions o;
  o.log = &log;
  o.checkpoint_dir = ckpt_dir;
  o.eval_set = d.utterances;
  o.vocab = &d.manifest.vocab;
  o.speakers = &d.manifest.speakers;
  o.features = c.features;
  train::run_training(st, d.utterances, o);
}

int cmd_train(const RunConfig& c, long steps, bool resume, std::ostream& out) {
  const Data d = load_training_data(c);
  train::TrainState st;
  if (resume) {
    const fs::path p = default_checkpoint(c);
    if (!fs::exists(p)) throw DataError("nothing to resume: " + p.string() + " not found");
    auto ck = train::load_checkpoint(p);
    if (!(ck.vocab == d.manifest.vocab) || ck.speakers != d.manifest.speakers) {
      throw DataError("checkpoint vocabulary or speakers differ from the manifest");
    }
    st = std::move(ck.state);
  } else {
    st = fresh_state(c, d, c.model.quantization);
  }
  if (steps > 0) st.config.max_steps = steps;
  run_and_log(st, d, c, c.paths.checkpoints, c.paths.reports / "train_log.jsonl", resume);
  const auto rep = train::evaluate(st.model, d.utterances);
  write_json(c.paths.reports / "train_summary.json",
             Json{{"steps", st.step}, {"skipped_steps", st.skipped_steps}, {"l1", optional_json(rep.l1)},
                  {"psnr", optional_json(rep.psnr)}, {"parameters", st.model.parameter_count()}});
  out << "trained to step " << st.step << ", l1 " << *rep.l1 << ", psnr " << *rep.psnr << " dB\n";
  return 0;
}

int cmd_resynth(const RunConfig& c, const Common& o, int levels, std::ostream& out) {
  const Trained t = load_trained(c, o.checkpoint);
  const fs::path dir = c.paths.reports / "resynth";
  model::ReconstructOptions ro;
  ro.max_levels = levels;
  Json rows = Json::array();
  double total = 0.0;
  for (const auto& u : t.data.utterances) {
    const auto mel = model::reconstruct(t.model(), u, ro);
    const double psnr = metrics::psnr_mel(u.mel, mel);
    total += psnr;
    write_mel(dir / (file_stem(u.id) + ".mel"), mel, t.features());
    if (o.wav) write_wav(dir / (file_stem(u.id) + ".wav"), vocode(mel, t.features()));
    rows.push_back(Json{{"id", u.id}, {"frames", mel.frames()}, {"psnr", psnr}});
  }
  const double mean = total / double(t.data.utterances.size());
  write_json(c.paths.reports / "resynth.json", Json{{"levels", levels}, {"mean_psnr", mean}, {"utterances", rows}});
  out << "resynthesized " << rows.size() << " utterances, mean psnr " << mean << " dB\n";
  return 0;
}

int cmd_cross_resynth(const RunConfig& c, const Common& o, const std::string& target, std::ostream& out) {
  const Trained t = load_trained(c, o.checkpoint);
  const int spk = resolve_speaker(t.ck.speakers, target);
  const fs::path dir = c.paths.reports / "cross_resynth";
  Json rows = Json::array();
  for (const auto& u : t.data.utterances) {
    model::ReconstructOptions ro;
    ro.speaker = spk;
    const auto mel = model::reconstruct(t.model(), u, ro);
    write_mel(dir / (file_stem(u.id) + ".mel"), mel, t.features());
    if (o.wav) write_wav(dir / (file_stem(u.id) + ".wav"), vocode(mel, t.features()));
    rows.push_back(Json{{"id", u.id},
                        {"source_speaker", t.ck.speakers[std::size_t(u.speaker_id)]},
                        {"target_speaker", t.ck.speakers[std::size_t(spk)]},
                        {"frames", mel.frames()}});
  }
  write_json(c.paths.reports / "cross_resynth.json", Json{{"target_speaker", t.ck.speakers[std::size_t(spk)]}, {"utterances", rows}});
  out << "cross-resynthesized " << rows.size() << " utterances as " << t.ck.speakers[std::size_t(spk)] << "\n";
  return 0;
}

int cmd_shuffle_codes(const RunConfig& c, const Common& o, std::uint64_t seed, std::ostream& out) {
  const Trained t = load_trained(c, o.checkpoint);
  if (t.model().config.quantization != model::Quantization::kRvq) {
    throw ContractError("shuffle-codes needs a quantized model");
  }
  rnd::Engine rng(seed);
  const fs::path dir = c.paths.reports / "shuffle_codes";
  Json rows = Json::array();
  double shuffled_total = 0.0, intact_total = 0.0;
  for (const auto& u : t.data.utterances) {
    auto codes = model::encode_utterance(t.model(), u).codes;
    const std::size_t n = u.phonemes.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rnd::index(rng, i + 1)]);
    auto shuffled = codes;
    for (std::size_t l = 0; l < codes.size(); ++l) {
      for (std::size_t i = 0; i < n; ++i) shuffled[l][i] = codes[l][perm[i]];
    }
    const auto mel = model::decode_codes(t.model(), shuffled, u.phonemes, u.durations, u.speaker_id);
    const auto intact = model::decode_codes(t.model(), codes, u.phonemes, u.durations, u.speaker_id);
    const double ps = metrics::psnr_mel(u.mel, mel), pi = metrics::psnr_mel(u.mel, intact);
    shuffled_total += ps;
    intact_total += pi;
    write_mel(dir / (file_stem(u.id) + ".mel"), mel, t.features());
    if (o.wav) write_wav(dir / (file_stem(u.id) + ".wav"), vocode(mel, t.features()));
    rows.push_back(Json{{"id", u.id}, {"psnr_shuffled", ps}, {"psnr_intact", pi}});
  }
  const double n = double(t.data.utterances.size());
  write_json(c.paths.reports / "shuffle_codes.json",
             Json{{"seed", seed},
                  {"mean_psnr_shuffled", shuffled_total / n},
                  {"mean_psnr_intact", intact_total / n},
                  {"utterances", rows}});
  out << "shuffled codes of " << rows.size() << " utterances: psnr " << shuffled_total / n << " dB vs "
      << intact_total / n << " dB intact\n";
  return 0;
}

int cmd_transfer(const RunConfig& c, const Common& o, const std::string& source, const std::string& target,
                 std::ostream& out) {
  const Trained t = load_trained(c, o.checkpoint);
  const auto& src = find_utterance(t.data.utterances, source);
  const auto& tgt = find_utterance(t.data.utterances, target);
  if (src.num_phonemes() != tgt.num_phonemes()) {
    throw DataError("transfer: source '" + source + "' has " + std::to_string(src.num_phonemes()) +
                    " phonemes but target '" + target + "' has " + std::to_string(tgt.num_phonemes()));
  }
  signal::MelSpectrogram mel;
  if (t.model().config.quantization == model::Quantization::kRvq) {
    const auto codes = model::encode_utterance(t.model(), src).codes;
    mel = model::decode_codes(t.model(), codes, tgt.phonemes, tgt.durations, src.speaker_id);
  } else {
    mel = model::decode_vectors(t.model(), model::encode_continuous(t.model(), src), tgt.phonemes, tgt.durations,
                                src.speaker_id);
  }
  const std::string stem = file_stem(source) + "__" + file_stem(target);
  const fs::path dir = c.paths.reports / "transfer";
  write_mel(dir / (stem + ".mel"), mel, t.features());
  if (o.wav) write_wav(dir / (stem + ".wav"), vocode(mel, t.features()));
  write_json(dir / (stem + ".json"), Json{{"source", source},
                                          {"target", target},
                                          {"speaker", t.ck.speakers[std::size_t(src.speaker_id)]},
                                          {"phonemes", tgt.num_phonemes()},
                                          {"frames", mel.frames()}});
  out << "transferred prosody of " << source << " onto " << target << "\n";
  return 0;
}

// ---- analyze -------------------------------------------------------------

int analyze_usage(const RunConfig& c, const Trained& t, std::ostream& out) {
  const Extraction e = extract(c, t);
  const std::size_t k = t.model().rvq.codebook_size();
  Json levels = Json::array();
  std::string csv = "level,code,count\n";
  for (std::size_t l = 0; l < e.usage.usage.size(); ++l) {
    levels.push_back(Json{{"level", l + 1}, {"usage", e.usage.usage[l]}, {"histogram", e.usage.histogram[l]}});
    for (std::size_t code = 0; code < k; ++code) {
      csv += std::to_string(l + 1) + "," + std::to_string(code) + "," + std::to_string(e.usage.histogram[l][code]) + "\n";
    }
  }
  const double full = mean_psnr(t.model(), e.utterances, 0);
  const double first = mean_psnr(t.model(), e.utterances, 1);
  write_json(c.paths.reports / "usage.json",
             Json{{"extraction_utterances", e.utterances.size()},
                  {"codebook_size", k},
                  {"levels", levels},
                  {"psnr", Json{{"full", full}, {"level1_only", first}, {"level2_gain", full - first}}}});
  write_text(c.paths.reports / "usage.csv", csv);
  out << "usage";
  for (double u : e.usage.usage) out << ' ' << u;
  out << "; psnr full " << full << " dB, level 1 only " << first << " dB\n";
  return 0;
}

int analyze_entropy(const RunConfig& c, const Trained& t, std::ostream& out) {
  const Extraction e = extract(c, t);
  const std::size_t k = t.model().rvq.codebook_size();
  const double alpha = c.analysis.smoothing;
  Json levels = Json::array();
  for (std::size_t l = 0; l < e.usage.usage.size(); ++l) {
    Json entry{{"level", l + 1}};
    for (bool by_phoneme : {false, true}) {
      const auto pmfs = analysis::conditional_pmfs(analysis::code_pairs(e.codes, e.utterances, l, by_phoneme), k, alpha);
      Json rows = Json::array();
      double mean = 0.0;
      for (const auto& p : pmfs) {
        const double h = analysis::entropy_nats(p);
        mean += h;
        const std::string label = by_phoneme ? t.ck.vocab.symbol(p.condition) : t.ck.speakers[std::size_t(p.condition)];
        rows.push_back(Json{{"condition", label}, {"count", p.count}, {"entropy", h}});
      }
      mean /= double(pmfs.size());
      entry[by_phoneme ? "by_phoneme" : "by_speaker"] = Json{{"mean_entropy", mean}, {"conditions", rows}};
      const std::string name = std::string("entropy_") + (by_phoneme ? "phoneme" : "speaker") + "_l" + std::to_string(l + 1) + ".csv";
      std::vector<std::string> labels;
      if (by_phoneme) {
        labels = vocab_labels(t.ck.vocab, pmfs);
      } else {
        for (const auto& p : pmfs) labels.push_back(t.ck.speakers[std::size_t(p.condition)]);
      }
      write_text(c.paths.reports / name, analysis::pmf_csv(pmfs, labels));
    }
    levels.push_back(entry);
  }
  Json report{{"smoothing", alpha}, {"uniform_entropy", std::log(double(k))}, {"levels", levels}};
  if (e.usage.usage.size() > 1) report["level_dependency"] = analysis::level_dependency(e.codes, k, alpha);
  write_json(c.paths.reports / "entropy.json", report);
  out << "speaker-conditional entropy per level:";
  for (const auto& l : levels) out << ' ' << l["by_speaker"]["mean_entropy"].get<double>();
  out << " (uniform " << std::log(double(k)) << ")\n";
  return 0;
}

int analyze_klmap(const RunConfig& c, const Trained& t, std::ostream& out) {
  const Extraction e = extract(c, t);
  const std::size_t k = t.model().rvq.codebook_size();
  analysis::TsneOptions to;
  to.perplexity = c.analysis.tsne_perplexity;
  to.iterations = c.analysis.tsne_iterations;
  to.seed = c.train.seed;
  for (std::size_t l = 0; l < e.usage.usage.size(); ++l) {
    const auto pmfs =
        analysis::conditional_pmfs(analysis::code_pairs(e.codes, e.utterances, l, true), k, c.analysis.smoothing);
    const auto labels = vocab_labels(t.ck.vocab, pmfs);
    const Tensor d = analysis::symmetric_kl_matrix(pmfs);
    const Tensor xy = analysis::embed_2d(d, c.analysis.embedding, to);
    const std::string stem = "klmap_l" + std::to_string(l + 1);
    write_text(c.paths.reports / (stem + "_distances.csv"), analysis::matrix_csv(d, labels));
    std::ostringstream emb;
    emb.precision(10);
    emb << "label,x,y\n";
    std::vector<analysis::ScatterPoint> pts;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      emb << labels[i] << ',' << xy(i, 0) << ',' << xy(i, 1) << '\n';
      pts.push_back({xy(i, 0), xy(i, 1), labels[i], false});
    }
    write_text(c.paths.reports / (stem + "_embedding.csv"), emb.str());
    write_text(c.paths.reports / (stem + ".svg"),
               analysis::scatter_svg(pts, "P(code | phoneme), level " + std::to_string(l + 1) + ", " +
                                              analysis::to_string(c.analysis.embedding),
                                     "dim 1", "dim 2"));
  }
  out << "wrote phoneme distance maps for " << e.usage.usage.size() << " levels\n";
  return 0;
}

int analyze_pca(const RunConfig& c, const Trained& t, std::ostream& out) {
  const Extraction e = extract(c, t);
  const PathSetup s = path_setup(c, t, e);
  const auto& book = t.model().rvq.levels[0];
  const Tensor coords = s.proj.project(book.entries);
  std::ostringstream csv;
  csv.precision(10);
  csv << "code,usage,pc1,pc2,on_path\n";
  std::vector<analysis::ScatterPoint> pts;
  for (std::size_t code = 0; code < book.size(); ++code) {
    const long n = e.usage.histogram[0][code];
    const bool on = std::find(s.path.begin(), s.path.end(), int(code)) != s.path.end();
    csv << code << ',' << n << ',' << coords(code, 0) << ',' << coords(code, 1) << ',' << (on ? 1 : 0) << '\n';
    if (n > 0) pts.push_back({coords(code, 0), coords(code, 1), on ? std::to_string(code) : "", on});
  }
  Json comps = Json::array();
  for (std::size_t i = 0; i < s.proj.components.rows(); ++i) {
    comps.push_back(std::vector<double>(s.proj.components.row(i).begin(), s.proj.components.row(i).end()));
  }
  Json path = Json::array();
  for (int code : s.path) {
    path.push_back(Json{{"code", code}, {"pc1", coords(std::size_t(code), 0)}, {"pc2", coords(std::size_t(code), 1)}});
  }
  write_json(c.paths.reports / "pca.json",
             Json{{"ratios", s.proj.ratios},
                  {"variance", s.proj.variance},
                  {"mean", std::vector<double>(s.proj.mean.values().begin(), s.proj.mean.values().end())},
                  {"components", comps},
                  {"path_axis", c.analysis.path_axis},
                  {"path", path}});
  write_text(c.paths.reports / "pca_codes.csv", csv.str());
  write_text(c.paths.reports / "pca.svg", analysis::scatter_svg(pts, "Level-1 codes", "PC1", "PC2"));
  out << "pca ratios";
  for (double r : s.proj.ratios) out << ' ' << r;
  out << "; path of " << s.path.size() << " codes\n";
  return 0;
}

Json probe_json(const analysis::ProbeMeasurement& r) {
  return Json{{"code", r.code}, {"level2_code", r.level2_code}, {"speaker", r.speaker}, {"f0", optional_json(r.f0)},
              {"rms", r.rms},   {"pc1", r.pc1},                 {"pc2", r.pc2}};
}

int analyze_probes(const RunConfig& c, const Trained& t, bool wav, std::ostream& out) {
  const Extraction e = extract(c, t);
  const PathSetup s = path_setup(c, t, e);
  const auto& m = t.model();
  std::vector<analysis::ProbeMeasurement> rows;
  Json js = Json::array();
  for (int code : s.path) {
    std::vector<int> codes(m.rvq.levels.size(), s.level2);
    codes[0] = code;
    const auto audio = analysis::synth_probe(m, *s.reference, codes, s.reference->speaker_id, t.features());
    auto r = analysis::measure_probe(audio, code, s.proj, m.rvq.levels[0], t.features());
    r.level2_code = s.level2;
    r.speaker = s.reference->speaker_id;
    if (wav) write_wav(c.paths.reports / "probes" / ("code" + std::to_string(code) + ".wav"), audio);
    rows.push_back(r);
    js.push_back(probe_json(r));
  }
  write_text(c.paths.reports / "probes.csv", analysis::probes_csv(rows));
  write_json(c.paths.reports / "probes.json", Json{{"reference", s.reference->id}, {"probes", js}});
  out << "probed " << rows.size() << " codes on " << s.reference->id << "\n";
  return 0;
}

int analyze_speaker_relative(const RunConfig& c, const Trained& t, std::ostream& out) {
  const Extraction e = extract(c, t);
  const PathSetup s = path_setup(c, t, e);
  std::vector<int> speakers(t.ck.speakers.size());
  std::iota(speakers.begin(), speakers.end(), 0);
  const auto rep =
      analysis::speaker_relative_report(t.model(), s.path, s.level2, *s.reference, speakers, s.proj, t.features());
  std::vector<analysis::ProbeMeasurement> flat;
  Json per = Json::array();
  for (const auto& rows : rep) {
    std::vector<double> pc, f0;
    Json js = Json::array();
    for (const auto& r : rows) {
      flat.push_back(r);
      js.push_back(probe_json(r));
      if (r.f0) {
        pc.push_back(r.pc1);
        f0.push_back(*r.f0);
      }
    }
    std::optional<double> rho;
    try {
      if (pc.size() >= 2) rho = metrics::spearman(pc, f0);
    } catch (const NumericError&) {
      // constant series: no rank correlation
    }
    per.push_back(Json{{"speaker", t.ck.speakers[std::size_t(rows.front().speaker)]},
                       {"voiced_probes", pc.size()},
                       {"spearman_pc1_f0", optional_json(rho)},
                       {"probes", js}});
  }
  write_text(c.paths.reports / "speaker_relative.csv", analysis::probes_csv(flat));
  write_json(c.paths.reports / "speaker_relative.json", Json{{"reference", s.reference->id}, {"speakers", per}});
  out << "speaker-relative probes for " << speakers.size() << " speakers along " << s.path.size() << " codes\n";
  return 0;
}

// ---- metrics -------------------------------------------------------------

int cmd_metrics(const RunConfig& c, const Common& o, const std::string& task, const std::string& hypotheses,
                std::ostream& out) {
  if (task == "intelligibility") {
    if (hypotheses.empty()) throw ConfigError("metrics --task intelligibility needs --hypotheses");
    const auto m = corpus::parse_manifest(c.paths.manifest, corpus::ManifestOptions{nullptr, nullptr, false});
    std::map<std::string, std::string> refs;
    for (const auto& r : m.records) {
      if (r.transcript) refs[r.id] = *r.transcript;
    }
    std::ifstream in(hypotheses);
    if (!in) throw DataError("cannot read " + hypotheses);
    std::string line, all_ref, all_hyp;
    std::size_t n = 0, line_no = 0;
    std::vector<std::size_t> word_errors, words, char_errors, chars;
    double wer_sum = 0.0, cer_sum = 0.0;
    Json rows = Json::array();
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      Json j;
      try {
        j = Json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(hypotheses + ":" + std::to_string(line_no) + ": " + e.what());
      }
      if (!j.is_object() || !j.contains("id") || !j.contains("text") || !j["id"].is_string() || !j["text"].is_string()) {
        throw DataError(hypotheses + ":" + std::to_string(line_no) + ": expected {\"id\": string, \"text\": string}");
      }
      const auto it = refs.find(j["id"].get<std::string>());
      if (it == refs.end()) {
        throw DataError(hypotheses + ":" + std::to_string(line_no) + ": no transcript for '" + j["id"].get<std::string>() + "'");
      }
      const auto r = metrics::wer_cer(it->second, j["text"].get<std::string>());
      wer_sum += r.wer;
      cer_sum += r.cer;
      ++n;
      rows.push_back(Json{{"id", it->first}, {"wer", r.wer}, {"cer", r.cer}});
    }
    if (n == 0) throw DataError(hypotheses + ": no hypotheses");
    write_json(c.paths.reports / "metrics_intelligibility.json",
               Json{{"wer", wer_sum / double(n)}, {"cer", cer_sum / double(n)}, {"utterances", rows}});
    out << "wer " << wer_sum / double(n) << " cer " << cer_sum / double(n) << "\n";
    return 0;
  }
  const Trained t = load_trained(c, o.checkpoint);
  if (task == "reconstruction") {
    const auto full = train::evaluate(t.model(), t.data.utterances);
    Json j{{"full", full.to_json()}};
    if (t.model().config.quantization == model::Quantization::kRvq) {
      j["level1_only"] = train::evaluate(t.model(), t.data.utterances, 1).to_json();
    }
    write_json(c.paths.reports / "metrics_reconstruction.json", j);
    out << "psnr " << *full.psnr << " dB, l1 " << *full.l1 << "\n";
    return 0;
  }
  if (task == "prosody") {
    const auto row = prosody_metrics(t.model(), t.data, t.features());
    const std::string label = model::to_string(t.model().config.quantization);
    write_json(c.paths.reports / "metrics_prosody.json", Json{{"model", label}, {"metrics", prosody_json(row)}});
    write_text(c.paths.reports / "metrics_prosody.csv", "model,mcd,vde,gpe,ffe\n" + prosody_csv_row(label, row));
    out << "mcd " << row.mcd << " vde " << row.vde << " gpe " << row.gpe << " ffe " << row.ffe << "\n";
    return 0;
  }
  throw ConfigError("unknown metrics task '" + task + "' (expected reconstruction, prosody or intelligibility)");
}

int cmd_ablate_continuous(const RunConfig& c, const Common& o, long steps, std::ostream& out) {
  const Trained discrete = load_trained(c, o.checkpoint);
  if (discrete.model().config.quantization != model::Quantization::kRvq) {
    throw ContractError("ablate-continuous compares against a quantized checkpoint");
  }
  const Data d = load_training_data(c);
  auto st = fresh_state(c, d, model::Quantization::kNone);
  if (steps > 0) st.config.max_steps = steps;
  const fs::path dir = c.paths.checkpoints / "continuous";
  run_and_log(st, d, c, dir, c.paths.reports / "continuous_train_log.jsonl", false);
  const auto rvq = prosody_metrics(discrete.model(), discrete.data, discrete.features());
  const auto cont = prosody_metrics(st.model, d, c.features);
  write_text(c.paths.reports / "ablate_continuous.csv",
             "model,mcd,vde,gpe,ffe\n" + prosody_csv_row("rvq", rvq) + prosody_csv_row("continuous", cont));
  write_json(c.paths.reports / "ablate_continuous.json",
             Json{{"rvq", prosody_json(rvq)},
                  {"continuous", prosody_json(cont)},
                  {"rvq_steps", discrete.ck.state.step},
                  {"continuous_steps", st.step}});
  out << "mcd rvq " << rvq.mcd << " continuous " << cont.mcd << "\n";
  return 0;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kUsage: return 1;
    case ErrorKind::kData: return 2;
    case ErrorKind::kNumeric: return 3;
  }
  return 2;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Phoneme-level residual-VQ prosody codec", "prvq"};
  app.require_subcommand(1);
  Common common;
  long steps = 0;
  int levels = 0;
  bool resume = false;
  std::uint64_t seed = 0;
  std::string target_speaker, source, target, task, hypotheses;

  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", common.config, "Run config (JSON)")->required(); };
  auto add_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", common.checkpoint, "Checkpoint (default: <checkpoints>/last.ckpt)");
  };
  auto add_wav = [&](CLI::App* sub) { sub->add_flag("--wav", common.wav, "Also write vocoded WAV files"); };

  auto* synth = app.add_subcommand("synth-data", "Write the seeded synthetic corpus and its manifest");
  add_config(synth);
  auto* prepare = app.add_subcommand("prepare", "Compute and cache mel features for the manifest");
  add_config(prepare);
  auto* train_cmd = app.add_subcommand("train", "Train the codec");
  add_config(train_cmd);
  train_cmd->add_option("--steps", steps, "Override train.max_steps")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--resume", resume, "Continue from <checkpoints>/last.ckpt");
  auto* resynth = app.add_subcommand("resynth", "Encode and decode every utterance");
  add_config(resynth);
  add_checkpoint(resynth);
  add_wav(resynth);
  resynth->add_option("--levels", levels, "Decode only the first N levels (0 = all)")->check(CLI::NonNegativeNumber);
  auto* cross = app.add_subcommand("cross-resynth", "Decode every utterance with another speaker");
  add_config(cross);
  add_checkpoint(cross);
  add_wav(cross);
  cross->add_option("--target-speaker", target_speaker, "Speaker name or ID")->required();
  auto* shuffle = app.add_subcommand("shuffle-codes", "Decode with code positions permuted");
  add_config(shuffle);
  add_checkpoint(shuffle);
  add_wav(shuffle);
  shuffle->add_option("--seed", seed, "Permutation seed")->required();
  auto* transfer = app.add_subcommand("transfer", "Decode source codes with the target's phonemes");
  add_config(transfer);
  add_checkpoint(transfer);
  add_wav(transfer);
  transfer->add_option("--source", source, "Source utterance ID")->required();
  transfer->add_option("--target", target, "Target utterance ID")->required();

  auto* analyze = app.add_subcommand("analyze", "Latent-space analyses");
  analyze->require_subcommand(1);
  std::map<std::string, CLI::App*> analyses;
  for (const char* name : {"usage", "entropy", "klmap", "pca", "probes", "speaker-relative"}) {
    auto* sub = analyze->add_subcommand(name);
    add_config(sub);
    add_checkpoint(sub);
    if (std::string(name) == "probes") add_wav(sub);
    analyses[name] = sub;
  }
  analyses["usage"]->description("Code usage per level and the level-1-only PSNR");
  analyses["entropy"]->description("Entropies of codes given speaker and phoneme");
  analyses["klmap"]->description("Symmetric-KL map of phoneme-conditional code distributions");
  analyses["pca"]->description("Principal components of level-1 codes and the probe path");
  analyses["probes"]->description("Probe synthesis along the path with F0/RMS measurement");
  analyses["speaker-relative"]->description("Path probes decoded for every speaker");

  auto* metrics_cmd = app.add_subcommand("metrics", "Objective evaluation reports");
  add_config(metrics_cmd);
  add_checkpoint(metrics_cmd);
  metrics_cmd->add_option("--task", task, "reconstruction | prosody | intelligibility")->required();
  metrics_cmd->add_option("--hypotheses", hypotheses, "JSON lines {id, text} for intelligibility");
  auto* ablate = app.add_subcommand("ablate-continuous", "Train the quantizer-free variant and compare");
  add_config(ablate);
  add_checkpoint(ablate);
  ablate->add_option("--steps", steps, "Override train.max_steps for the continuous run")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_store{"prvq"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    const RunConfig c = load_config(common.config);
    write_json(c.paths.reports / "config.json", to_json(c));
    if (synth->parsed()) return cmd_synth_data(c, out);
    if (prepare->parsed()) return cmd_prepare(c, out);
    if (train_cmd->parsed()) return cmd_train(c, steps, resume, out);
    if (resynth->parsed()) return cmd_resynth(c, common, levels, out);
    if (cross->parsed()) return cmd_cross_resynth(c, common, target_speaker, out);
    if (shuffle->parsed()) return cmd_shuffle_codes(c, common, seed, out);
    if (transfer->parsed()) return cmd_transfer(c, common, source, target, out);
    if (metrics_cmd->parsed()) return cmd_metrics(c, common, task, hypotheses, out);
    if (ablate->parsed()) return cmd_ablate_continuous(c, common, steps, out);
    for (const auto& [name, sub] : analyses) {
      if (!sub->parsed()) continue;
      const Trained t = load_trained(c, common.checkpoint);
      if (name == "usage") return analyze_usage(c, t, out);
      if (name == "entropy") return analyze_entropy(c, t, out);
      if (name == "klmap") return analyze_klmap(c, t, out);
      if (name == "pca") return analyze_pca(c, t, out);
      if (name == "probes") return analyze_probes(c, t, common.wav, out);
      return analyze_speaker_relative(c, t, out);
    }
    err << "error: no command\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace prvq::cli
