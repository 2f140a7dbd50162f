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

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prvq/corpus.hpp"
#include "prvq/model.hpp"
#include "prvq/quantizer.hpp"
#include "prvq/signal.hpp"

namespace prvq::analysis {

inline constexpr double kDefaultSmoothing = 0.5;

/// Distribution of codes given one condition (speaker, phoneme or level-1 code).
struct ConditionalPMF {
  int condition = 0;
  std::vector<double> p;  // K entries
  long count = 0;         // observations behind p

  void validate() const;
};

/// (count_j + alpha) / (N + alpha K) per condition, ordered by condition.
std::vector<ConditionalPMF> conditional_pmfs(std::span<const std::pair<int, int>> pairs, std::size_t k, double alpha);

/// -sum p ln p, with 0 ln 0 = 0.
double entropy_nats(std::span<const double> p);
inline double entropy_nats(const ConditionalPMF& p) { return entropy_nats(p.p); }

/// (condition, code) pairs of `level` where the condition is the speaker ID
/// (`by_phoneme` false) or the phoneme ID.
std::vector<std::pair<int, int>> code_pairs(std::span<const vq::CodeSequence> codes,
                                            std::span<const corpus::Utterance> utterances, std::size_t level,
                                            bool by_phoneme);

/// Mean entropy of P(code_2 | code_1) over the observed level-1 codes.
double level_dependency(std::span<const vq::CodeSequence> sequences, std::size_t k, double alpha = 0.0);

/// D[i,j] = KL(p_i || p_j) + KL(p_j || p_i). Zero probabilities raise NumericError.
Tensor symmetric_kl_matrix(std::span<const ConditionalPMF> pmfs);

enum class EmbedMethod { kMds, kTsne };
const char* to_string(EmbedMethod m);
EmbedMethod parse_embed_method(const std::string& s);

struct TsneOptions {
  double perplexity = 5.0;
  int iterations = 1000;
  std::uint64_t seed = 1;
};

/// Classical MDS: top eigenvectors of -1/2 J D^2 J. Column signs make the
/// largest-magnitude entry positive.
Tensor classical_mds(const Tensor& d, std::size_t dims = 2);
/// Exact t-SNE on precomputed distances.
Tensor tsne(const Tensor& d, const TsneOptions& opts = {});
/// Checks D is square, symmetric and zero on the diagonal, then embeds.
Tensor embed_2d(const Tensor& d, EmbedMethod method, const TsneOptions& opts = {});

struct PCAProjection {
  Tensor mean;                     // 1 x d
  Tensor components;               // d x d, row i = i-th component
  std::vector<double> variance;    // per component, descending
  std::vector<double> ratios;      // variance / total

  /// Rows of `x` in component coordinates.
  Tensor project(const Tensor& x) const;
  Tensor reconstruct(const Tensor& coords) const;
};

/// Weighted PCA of the rows of `x` (weights default to 1). Each component's
/// largest-magnitude entry is positive.
PCAProjection pca(const Tensor& x, std::span<const double> weights = {});

/// PCA of codebook entries weighted by how often each code occurs. Needs at
/// least three used codes and rank >= 2.
PCAProjection pca_codes(const vq::Codebook& book, std::span<const long> usage);

struct PathOptions {
  int axis = 1;               // 1 or 2
  int n_points = 6;
  double half_width = 0.25;   // corridor half-width on the other axis
  double center = 0.0;        // corridor centre on the other axis
};

/// Codes inside the corridor nearest to n_points evenly spaced targets along
/// the axis, distinct and ordered by their on-axis coordinate. Codes with zero
/// usage are ignored when `usage` is given.
std::vector<int> select_path_codes(const PCAProjection& proj, const vq::Codebook& book, const PathOptions& opts,
                                   std::span<const long> usage = {});

/// Most frequent code of a level (lowest index on ties).
int most_frequent_code(std::span<const long> histogram);

struct ProbeMeasurement {
  int code = 0;
  int level2_code = 0;
  int speaker = 0;
  std::optional<double> f0;  // absent when no frame is voiced
  double rms = 0.0;
  double pc1 = 0.0;
  double pc2 = 0.0;
};

/// Decodes the reference with every position set to `codes` and inverts the mel.
signal::AudioBuffer synth_probe(const model::Model& m, const corpus::Utterance& reference,
                                const std::vector<int>& codes, int speaker, const signal::FeatureConfig& features);

ProbeMeasurement measure_probe(const signal::AudioBuffer& audio, int code, const PCAProjection& proj,
                               const vq::Codebook& book, const signal::FeatureConfig& features);

/// Probes for every (code, speaker), grouped by speaker in code order.
std::vector<std::vector<ProbeMeasurement>> speaker_relative_report(const model::Model& m, std::span<const int> path,
                                                                   int level2_code, const corpus::Utterance& reference,
                                                                   std::span<const int> speakers,
                                                                   const PCAProjection& proj,
                                                                   const signal::FeatureConfig& features);

// ---- output --------------------------------------------------------------

std::string pmf_csv(std::span<const ConditionalPMF> pmfs, std::span<const std::string> labels);
std::string probes_csv(std::span<const ProbeMeasurement> rows);
std::string matrix_csv(const Tensor& m, std::span<const std::string> labels);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
  bool highlight = false;
};

/// Standalone SVG scatter plot with axis-fitted scaling.
std::string scatter_svg(std::span<const ScatterPoint> points, const std::string& title, const std::string& x_label,
                        const std::string& y_label);

}  // namespace prvq::analysis
