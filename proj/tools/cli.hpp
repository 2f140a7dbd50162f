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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prvq/analysis.hpp"
#include "prvq/config.hpp"
#include "prvq/corpus.hpp"
#include "prvq/trainer.hpp"

namespace prvq::cli {

struct Paths {
  std::filesystem::path manifest = "data/manifest.jsonl";
  std::filesystem::path cache = "cache";
  std::filesystem::path checkpoints = "checkpoints";
  std::filesystem::path reports = "reports";
};

struct AnalysisConfig {
  double smoothing = analysis::kDefaultSmoothing;
  /// Share of the corpus (seeded slice) that code statistics are computed on.
  double extraction_fraction = 0.1;
  analysis::EmbedMethod embedding = analysis::EmbedMethod::kMds;
  double tsne_perplexity = 5.0;
  int tsne_iterations = 1000;
  int path_axis = 1;
  int path_points = 6;
  double corridor_half_width = 0.25;
  double corridor_center = 0.0;
  std::string reference_utterance;   // empty: first utterance of the extraction slice
  std::optional<int> probe_level2_code;  // empty: most frequent level-2 code
};

struct RunConfig {
  signal::FeatureConfig features;
  model::ModelConfig model;
  train::TrainConfig train;
  corpus::SynthSpec synth;
  Paths paths;
  AnalysisConfig analysis;

  /// Cross-section checks; throws ConfigError.
  void validate() const;
};

config::Json to_json(const RunConfig& c);
/// Relative paths are resolved against `base_dir`.
RunConfig run_config_from_json(const config::Json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Seeded, sorted subset of ceil(fraction * n) indices (at least one).
std::vector<std::size_t> extraction_indices(std::size_t n, double fraction, std::uint64_t seed);

/// Runs one command line (without the program name). Returns the exit code:
/// 0 success, 1 usage or config error, 2 data or contract error, 3 numeric error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prvq::cli
