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
#include <limits>
#include <string>

#include "prvq/error.hpp"
#include "prvq/quantizer.hpp"

namespace prvq::vq {

namespace {

void check_dim(const char* op, const Codebook& book, const Tensor& x) {
  if (x.cols() != book.dim()) {
    throw ShapeError(std::string(op) + ": vectors " + x.shape_string() + " vs codebook " +
                     book.entries.shape_string());
  }
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

std::size_t nearest(const Tensor& entries, std::span<const double> v, double* dist = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < entries.rows(); ++k) {
    const double d = sq_dist(entries.row(k), v);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

void set_code(Codebook& book, std::size_t k, std::span<const double> v) {
  std::copy(v.begin(), v.end(), book.entries.row(k).begin());
  std::copy(v.begin(), v.end(), book.ema_sum.row(k).begin());
  book.ema_count[k] = 1.0;
}

}  // namespace

Codebook::Codebook(std::size_t k, std::size_t d, double decay_, double epsilon_)
    : entries(k, d), ema_count(k, 0.0), ema_sum(k, d), decay(decay_), epsilon(epsilon_) {
  validate();
}

void Codebook::validate() const {
  if (entries.rows() == 0 || entries.cols() == 0) throw ContractError("codebook: K and d must be positive");
  if (!(decay >= 0.0 && decay < 1.0)) throw ContractError("codebook: decay must be in [0, 1)");
  if (!(epsilon >= 0.0)) throw ContractError("codebook: epsilon must be >= 0");
  if (ema_count.size() != entries.rows() || !ema_sum.same_shape(entries)) {
    throw ShapeError("codebook: EMA statistics do not match entries " + entries.shape_string());
  }
  if (!entries.all_finite()) throw NumericError("codebook: non-finite entries");
  for (double c : ema_count) {
    if (!(c >= 0.0)) throw NumericError("codebook: negative or non-finite EMA count");
  }
}

RVQ::RVQ(std::size_t num_levels, std::size_t k, std::size_t d, double decay, double epsilon, double beta)
    : commitment_weight(beta) {
  if (num_levels == 0) throw ContractError("rvq: need at least one level");
  for (std::size_t l = 0; l < num_levels; ++l) levels.emplace_back(k, d, decay, epsilon);
  validate();
}

bool RVQ::initialized() const {
  return std::all_of(levels.begin(), levels.end(), [](const Codebook& b) { return b.initialized; });
}

void RVQ::validate() const {
  if (levels.empty()) throw ContractError("rvq: need at least one level");
  if (!(commitment_weight >= 0.0)) throw ContractError("rvq: commitment weight must be >= 0");
  for (const auto& b : levels) {
    b.validate();
    if (b.dim() != dim() || b.size() != codebook_size()) throw ShapeError("rvq: levels differ in K or d");
  }
}

LevelResult quantize_level(const Codebook& book, const Tensor& x) {
  check_dim("quantize_level", book, x);
  LevelResult r;
  r.indices.resize(x.rows());
  r.quantized = Tensor(x.rows(), x.cols());
  r.residual = Tensor(x.rows(), x.cols());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const std::size_t k = nearest(book.entries, x.row(n));
    r.indices[n] = int(k);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      r.quantized(n, j) = book.entries(k, j);
      r.residual(n, j) = x(n, j) - book.entries(k, j);
    }
  }
  return r;
}

RvqResult rvq_quantize(const RVQ& q, const Tensor& x) {
  if (q.levels.empty()) throw ContractError("rvq: no levels");
  check_dim("rvq_forward", q.levels.front(), x);
  RvqResult out;
  out.sequence.vectors = Tensor(x.rows(), x.cols());
  Tensor r = x;
  double commit = 0.0;
  for (const auto& book : q.levels) {
    LevelResult lr = quantize_level(book, r);
    out.level_inputs.push_back(std::move(r));
    out.sequence.vectors.map() += lr.quantized.map();
    commit += lr.residual.map().squaredNorm();
    out.sequence.codes.push_back(std::move(lr.indices));
    r = std::move(lr.residual);
  }
  out.residual = std::move(r);
  const double denom = double(q.num_levels()) * double(std::max<std::size_t>(x.rows(), 1));
  out.distortion = commit / denom;
  out.commitment = q.commitment_weight * out.distortion;
  return out;
}

RvqOutput rvq_forward(const RVQ& q, ad::Var x) {
  RvqOutput out;
  out.result = rvq_quantize(q, x.value());
  ad::Graph& g = x.graph();
  out.output = ad::straight_through(x, out.result.sequence.vectors);

  // ||r_{l-1} - sg(q_l)||^2 with r_l = r_{l-1} - q_l, so gradients reach x at every level.
  ad::Var r = x;
  ad::Var total;
  for (std::size_t l = 0; l < q.num_levels(); ++l) {
    const Tensor& input = out.result.level_inputs[l];
    Tensor code(input.rows(), input.cols());
    for (std::size_t n = 0; n < input.rows(); ++n) {
      const auto e = q.levels[l].entries.row(std::size_t(out.result.sequence.codes[l][n]));
      std::copy(e.begin(), e.end(), code.row(n).begin());
    }
    r = ad::sub(r, g.constant(std::move(code)));
    ad::Var term = ad::sum(ad::square(r));
    total = l == 0 ? term : ad::add(total, term);
  }
  const double denom = double(q.num_levels()) * double(std::max<std::size_t>(x.rows(), 1));
  out.commitment = ad::scale(total, q.commitment_weight / denom);
  return out;
}

Tensor lookup(const RVQ& q, const std::vector<std::vector<int>>& codes) {
  if (codes.size() != q.num_levels()) {
    throw ShapeError("lookup: " + std::to_string(codes.size()) + " code levels for a " +
                     std::to_string(q.num_levels()) + "-level quantizer");
  }
  const std::size_t n = codes.front().size();
  Tensor out(n, q.dim());
  for (std::size_t l = 0; l < codes.size(); ++l) {
    if (codes[l].size() != n) throw ShapeError("lookup: levels have different lengths");
    for (std::size_t i = 0; i < n; ++i) {
      const int c = codes[l][i];
      if (c < 0 || std::size_t(c) >= q.codebook_size()) {
        throw ContractError("lookup: code " + std::to_string(c) + " out of range at level " + std::to_string(l));
      }
      for (std::size_t j = 0; j < q.dim(); ++j) out(i, j) += q.levels[l].entries(std::size_t(c), j);
    }
  }
  return out;
}

void ema_update(Codebook& book, std::span<const int> assignments, const Tensor& vectors) {
  check_dim("ema_update", book, vectors);
  if (assignments.size() != vectors.rows()) {
    throw ShapeError("ema_update: " + std::to_string(assignments.size()) + " assignments for " +
                     std::to_string(vectors.rows()) + " vectors");
  }
  const std::size_t k = book.size(), d = book.dim();
  std::vector<double> n(k, 0.0);
  Tensor s(k, d);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const int a = assignments[i];
    if (a < 0 || std::size_t(a) >= k) throw ContractError("ema_update: assignment out of range");
    n[std::size_t(a)] += 1.0;
    for (std::size_t j = 0; j < d; ++j) s(std::size_t(a), j) += vectors(i, j);
  }
  const double lam = book.decay;
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    book.ema_count[c] = lam * book.ema_count[c] + (1.0 - lam) * n[c];
    total += book.ema_count[c];
  }
  book.ema_sum.map() = lam * book.ema_sum.map() + (1.0 - lam) * s.map();

  const double smoothed_denom = total + double(k) * book.epsilon;
  if (!(total > 0.0)) return;
  for (std::size_t c = 0; c < k; ++c) {
    const double count = (book.ema_count[c] + book.epsilon) / smoothed_denom * total;
    if (!(count > 0.0)) continue;
    for (std::size_t j = 0; j < d; ++j) book.entries(c, j) = book.ema_sum(c, j) / count;
  }
  if (!book.entries.all_finite()) throw NumericError("ema_update: non-finite codebook entries");
}

void ema_update(RVQ& q, const RvqResult& r) {
  for (std::size_t l = 0; l < q.num_levels(); ++l) ema_update(q.levels[l], r.sequence.codes[l], r.level_inputs[l]);
}

void kmeans_init(Codebook& book, const Tensor& x, rnd::Engine& rng) {
  check_dim("kmeans_init", book, x);
  if (x.rows() == 0) throw ContractError("kmeans_init: empty batch");
  const std::size_t k = book.size();
  std::vector<double> d2(x.rows(), std::numeric_limits<double>::infinity());
  std::size_t pick = rnd::index(rng, x.rows());
  for (std::size_t c = 0; c < k; ++c) {
    set_code(book, c, x.row(pick));
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      d2[i] = std::min(d2[i], sq_dist(x.row(i), book.entries.row(c)));
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (total > 0.0) {
      double u = rnd::uniform01(rng) * total;
      pick = x.rows() - 1;
      for (std::size_t i = 0; i < x.rows(); ++i) {
        u -= d2[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rnd::index(rng, x.rows());
    }
  }
  book.initialized = true;
}

void kmeans_init(RVQ& q, const Tensor& x, rnd::Engine& rng) {
  Tensor r = x;
  for (auto& book : q.levels) {
    kmeans_init(book, r, rng);
    r = quantize_level(book, r).residual;
  }
}

std::size_t reinit_dead_codes(Codebook& book, const Tensor& batch, double threshold, rnd::Engine& rng) {
  check_dim("reinit_dead_codes", book, batch);
  if (batch.rows() == 0) throw ContractError("reinit_dead_codes: empty batch");
  std::size_t moved = 0;
  for (std::size_t c = 0; c < book.size(); ++c) {
    if (book.ema_count[c] < threshold) {
      set_code(book, c, batch.row(rnd::index(rng, batch.rows())));
      ++moved;
    }
  }
  return moved;
}

UsageStats usage_stats(std::span<const CodeSequence> sequences, std::size_t k) {
  if (k == 0) throw ContractError("usage_stats: K must be positive");
  UsageStats st;
  std::size_t levels = 0;
  for (const auto& s : sequences) levels = std::max(levels, s.num_levels());
  st.histogram.assign(levels, std::vector<long>(k, 0));
  for (const auto& s : sequences) {
    for (std::size_t l = 0; l < s.num_levels(); ++l) {
      for (int c : s.codes[l]) {
        if (c < 0 || std::size_t(c) >= k) throw ContractError("usage_stats: code out of range");
        ++st.histogram[l][std::size_t(c)];
      }
    }
  }
  for (const auto& h : st.histogram) {
    const auto used = std::count_if(h.begin(), h.end(), [](long v) { return v > 0; });
    st.usage.push_back(double(used) / double(k));
  }
  return st;
}

double quantization_objective(const Tensor& entries, const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double d;
    nearest(entries, x.row(i), &d);
    s += d;
  }
  return s;
}

}  // namespace prvq::vq
