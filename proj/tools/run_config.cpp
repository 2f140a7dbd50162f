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
#include <fstream>
#include <numeric>
#include <sstream>

#include "cli.hpp"
#include "prvq/random.hpp"

namespace prvq::cli {

namespace fs = std::filesystem;
using config::Json;
using config::ObjectReader;

void RunConfig::validate() const {
  if (model.mel_bands != features.n_mels) {
    throw ConfigError("model.mel_bands (" + std::to_string(model.mel_bands) + ") must equal features.n_mels (" +
                      std::to_string(features.n_mels) + ")");
  }
  const auto& a = analysis;
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("analysis.") + what);
  };
  need(a.smoothing >= 0.0 && std::isfinite(a.smoothing), "smoothing must be finite and >= 0");
  need(a.extraction_fraction > 0.0 && a.extraction_fraction <= 1.0, "extraction_fraction must be in (0, 1]");
  need(a.tsne_perplexity > 0.0, "tsne_perplexity must be positive");
  need(a.tsne_iterations >= 1, "tsne_iterations must be positive");
  need(a.path_axis == 1 || a.path_axis == 2, "path_axis must be 1 or 2");
  need(a.path_points >= 2, "path_points must be >= 2");
  need(a.corridor_half_width >= 0.0, "corridor_half_width must be >= 0");
  need(!a.probe_level2_code || (*a.probe_level2_code >= 0 && *a.probe_level2_code < model.codebook_size),
       "probe_level2_code must index the codebook");
}

Json to_json(const RunConfig& c) {
  const auto& a = c.analysis;
  Json analysis{{"smoothing", a.smoothing},
                {"extraction_fraction", a.extraction_fraction},
                {"embedding", analysis::to_string(a.embedding)},
                {"tsne_perplexity", a.tsne_perplexity},
                {"tsne_iterations", a.tsne_iterations},
                {"path_axis", a.path_axis},
                {"path_points", a.path_points},
                {"corridor_half_width", a.corridor_half_width},
                {"corridor_center", a.corridor_center},
                {"reference_utterance", a.reference_utterance},
                {"probe_level2_code", a.probe_level2_code ? Json(*a.probe_level2_code) : Json(nullptr)}};
  Json paths{{"manifest", c.paths.manifest.string()},
             {"cache", c.paths.cache.string()},
             {"checkpoints", c.paths.checkpoints.string()},
             {"reports", c.paths.reports.string()}};
  return Json{{"features", config::to_json(c.features)}, {"model", config::to_json(c.model)},
              {"train", config::to_json(c.train)},       {"synth", config::to_json(c.synth)},
              {"paths", paths},                          {"analysis", analysis}};
}

namespace {

void read_paths(const Json& j, Paths& p, const fs::path& base) {
  ObjectReader r(j, "paths");
  auto path = [&](const char* key, fs::path& out) {
    std::string s = out.string();
    r.get(key, s);
    if (s.empty()) throw ConfigError(r.where(key) + ": must not be empty");
    out = s;
  };
  path("manifest", p.manifest);
  path("cache", p.cache);
  path("checkpoints", p.checkpoints);
  path("reports", p.reports);
  r.finish();
  for (fs::path* q : {&p.manifest, &p.cache, &p.checkpoints, &p.reports}) {
    if (q->is_relative()) *q = (base / *q).lexically_normal();
  }
}

void read_analysis(const Json& j, AnalysisConfig& a) {
  ObjectReader r(j, "analysis");
  r.get("smoothing", a.smoothing);
  r.get("extraction_fraction", a.extraction_fraction);
  std::string method = analysis::to_string(a.embedding);
  r.get("embedding", method);
  try {
    a.embedding = analysis::parse_embed_method(method);
  } catch (const ConfigError& e) {
    throw ConfigError(r.where("embedding") + ": " + e.what());
  }
  r.get("tsne_perplexity", a.tsne_perplexity);
  r.get("tsne_iterations", a.tsne_iterations);
  r.get("path_axis", a.path_axis);
  r.get("path_points", a.path_points);
  r.get("corridor_half_width", a.corridor_half_width);
  r.get("corridor_center", a.corridor_center);
  r.get("reference_utterance", a.reference_utterance);
  if (const Json* v = r.raw("probe_level2_code")) {
    if (v->is_null()) {
      a.probe_level2_code.reset();
    } else if (v->is_number_integer()) {
      a.probe_level2_code = v->get<int>();
    } else {
      throw ConfigError(r.where("probe_level2_code") + ": expected integer or null, found " + v->type_name());
    }
  }
  r.finish();
}

}  // namespace

RunConfig run_config_from_json(const Json& j, const fs::path& base_dir) {
  RunConfig c;
  ObjectReader r(j, "");
  if (const Json* f = r.object("features")) config::from_json(*f, c.features);
  // Model bands follow the features unless set explicitly.
  c.model.mel_bands = c.features.n_mels;
  if (const Json* m = r.object("model")) config::from_json(*m, c.model);
  if (const Json* t = r.object("train")) config::from_json(*t, c.train);
  c.synth.features = c.features;
  if (const Json* s = r.object("synth")) config::from_json(*s, c.synth);
  if (const Json* p = r.object("paths")) read_paths(*p, c.paths, base_dir);
  else read_paths(Json::object(), c.paths, base_dir);
  if (const Json* a = r.object("analysis")) read_analysis(*a, c.analysis);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, fs::absolute(path).parent_path());
}

std::vector<std::size_t> extraction_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (n == 0) throw DataError("extraction: empty corpus");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (fraction >= 1.0) return idx;
  rnd::Engine rng(seed ^ 0x65787472616374ULL);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rnd::index(rng, i + 1)]);
  const std::size_t take = std::max<std::size_t>(1, std::size_t(std::ceil(fraction * double(n) - 1e-9)));
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace prvq::cli
