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

#include <cstddef>
#include <span>
#include <vector>

#include "prvq/autodiff.hpp"
#include "prvq/random.hpp"
#include "prvq/tensor.hpp"

namespace prvq::vq {

/// One quantization level with EMA statistics.
struct Codebook {
  Tensor entries;                 // K x d
  std::vector<double> ema_count;  // K
  Tensor ema_sum;                 // K x d
  double decay = 0.99;
  double epsilon = 1e-5;
  bool initialized = false;

  Codebook() = default;
  Codebook(std::size_t k, std::size_t d, double decay, double epsilon);

  std::size_t size() const { return entries.rows(); }
  std::size_t dim() const { return entries.cols(); }
  void validate() const;
};

struct RVQ {
  std::vector<Codebook> levels;
  double commitment_weight = 0.25;

  RVQ() = default;
  RVQ(std::size_t num_levels, std::size_t k, std::size_t d, double decay = 0.99,
      double epsilon = 1e-5, double beta = 0.25);

  std::size_t num_levels() const { return levels.size(); }
  std::size_t codebook_size() const { return levels.empty() ? 0 : levels.front().size(); }
  std::size_t dim() const { return levels.empty() ? 0 : levels.front().dim(); }
  bool initialized() const;
  void validate() const;
};

/// Per-phoneme code indices, level-major, plus the summed code vectors.
struct CodeSequence {
  std::vector<std::vector<int>> codes;  // [level][position]
  Tensor vectors;                       // positions x d

  std::size_t size() const { return codes.empty() ? 0 : codes.front().size(); }
  std::size_t num_levels() const { return codes.size(); }
  int code(std::size_t level, std::size_t pos) const { return codes[level][pos]; }
};

struct LevelResult {
  std::vector<int> indices;
  Tensor quantized;
  Tensor residual;
};

/// Nearest code by squared Euclidean distance, lowest index on ties.
LevelResult quantize_level(const Codebook& book, const Tensor& x);

/// Forward pass without gradients.
struct RvqResult {
  CodeSequence sequence;
  std::vector<Tensor> level_inputs;  // r_{l-1} for each level, r_0 = x
  Tensor residual;                   // final residual x - sum of codes
  double distortion = 0.0;           // mean over levels and positions of ||r_{l-1} - q_l||^2
  double commitment = 0.0;           // commitment_weight * distortion
};
RvqResult rvq_quantize(const RVQ& q, const Tensor& x);

/// Differentiable forward: straight-through output and commitment loss.
struct RvqOutput {
  RvqResult result;
  ad::Var output;
  ad::Var commitment;
};
RvqOutput rvq_forward(const RVQ& q, ad::Var x);

/// Summed code vectors for given indices.
Tensor lookup(const RVQ& q, const std::vector<std::vector<int>>& codes);

void ema_update(Codebook& book, std::span<const int> assignments, const Tensor& vectors);

/// EMA update of every level from a forward result.
void ema_update(RVQ& q, const RvqResult& r);

/// k-means++ seeding from `x`; counts start at 1 and sums at the entries.
void kmeans_init(Codebook& book, const Tensor& x, rnd::Engine& rng);

/// Seeds each level on the residual left by the levels before it.
void kmeans_init(RVQ& q, const Tensor& x, rnd::Engine& rng);

/// Codes whose EMA count is below `threshold` are moved onto random rows of
/// `batch`. Returns how many were moved.
std::size_t reinit_dead_codes(Codebook& book, const Tensor& batch, double threshold, rnd::Engine& rng);

struct UsageStats {
  std::vector<double> usage;                  // per level, distinct / K
  std::vector<std::vector<long>> histogram;   // [level][code]
};
UsageStats usage_stats(std::span<const CodeSequence> sequences, std::size_t k);

/// Sum of squared distances from each row of x to its nearest entry.
double quantization_objective(const Tensor& entries, const Tensor& x);

}  // namespace prvq::vq
