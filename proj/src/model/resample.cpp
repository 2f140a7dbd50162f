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

namespace {

void check_durations(std::span<const int> durations, std::size_t frames) {
  if (durations.empty()) throw ContractError("gaussian_weights: no phonemes");
  long total = 0;
  for (int d : durations) {
    if (d < 1) throw ContractError("gaussian_weights: durations must be >= 1");
    total += d;
  }
  if (std::size_t(total) != frames) {
    throw ContractError("gaussian_weights: durations sum to " + std::to_string(total) + " but T = " +
                        std::to_string(frames));
  }
}

}  // namespace

ResampleWeights gaussian_weights(std::span<const int> durations, std::size_t frames, SigmaPolicy policy,
                                 double sigma) {
  check_durations(durations, frames);
  if (policy != SigmaPolicy::kDuration && !(sigma > 0.0)) throw ContractError("gaussian_weights: sigma must be positive");
  const std::size_t n = durations.size();
  ResampleWeights r;
  r.centers.resize(n);
  r.sigmas.resize(n);
  double end = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    end += durations[i];
    r.centers[i] = end - durations[i] / 2.0;
    r.sigmas[i] = policy == SigmaPolicy::kDuration ? std::max(durations[i], 1) / 3.0 : sigma;
  }
  // Per-frame softmax over phonemes of the Gaussian log-weights.
  r.w = Tensor(frames, n);
  std::vector<double> logit(n);
  for (std::size_t t = 0; t < frames; ++t) {
    const double pos = double(t) + 0.5;
    double mx = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (pos - r.centers[i]) / r.sigmas[i];
      logit[i] = -0.5 * z * z;
      mx = std::max(mx, logit[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (r.w(t, i) = std::exp(logit[i] - mx));
    for (std::size_t i = 0; i < n; ++i) r.w(t, i) /= s;
  }
  return r;
}

Tensor downsample(const Tensor& x, const ResampleWeights& w) {
  if (x.rows() != w.w.rows()) {
    throw ShapeError("downsample: features " + x.shape_string() + " vs weights " + w.w.shape_string());
  }
  RowMatrix wt = w.w.map().transpose();
  for (Eigen::Index i = 0; i < wt.rows(); ++i) wt.row(i) /= wt.row(i).sum();
  return Tensor::from_eigen(wt * x.map());
}

Tensor upsample(const Tensor& h, const ResampleWeights& w) {
  if (h.rows() != w.w.cols()) {
    throw ShapeError("upsample: features " + h.shape_string() + " vs weights " + w.w.shape_string());
  }
  return Tensor::from_eigen(w.w.map() * h.map());
}

}  // namespace prvq::model
