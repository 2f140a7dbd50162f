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
#include <vector>

#include "prvq/signal.hpp"

namespace prvq::metrics {

/// Objective scores; each field is filled only when the task computes it.
struct MetricReport {
  std::optional<double> psnr;
  std::optional<double> mcd;
  std::optional<double> vde;
  std::optional<double> gpe;
  std::optional<double> ffe;
  std::optional<double> pearson_f0;
  std::optional<double> pearson_energy;
  std::optional<double> wer;
  std::optional<double> cer;
  std::optional<double> l1;

  void validate() const;
  /// JSON object with only the present fields, in declaration order.
  std::string to_json() const;
  static std::string csv_header();
  /// Absent fields are empty cells.
  std::string csv_row() const;
};

inline constexpr double kPsnrCap = 60.0;

/// 10 log10(R^2 / MSE), R = max - min of `ref`; kPsnrCap when MSE < 1e-12.
double psnr_mel(const signal::MelSpectrogram& ref, const signal::MelSpectrogram& hyp);

/// Orthonormal DCT-II of each log-mel frame, first `count` coefficients.
Tensor mel_cepstrum(const signal::MelSpectrogram& mel, std::size_t count);

/// (10 / ln 10) sqrt(2) times the mean over frames of ||c_ref - c_hyp|| on coefficients 1..13.
double mcd(const signal::MelSpectrogram& ref, const signal::MelSpectrogram& hyp);
double mcd_from_cepstra(const Tensor& ref, const Tensor& hyp);

struct F0Errors {
  double vde = 0.0;
  double gpe = 0.0;
  double ffe = 0.0;
};

/// Voicing decision error, gross pitch error (relative deviation > `threshold`)
/// and F0 frame error. GPE is 0 when no frame is voiced in both.
F0Errors f0_errors(const signal::PitchContour& ref, const signal::PitchContour& hyp, double threshold = 0.2);

/// Sample correlation; throws NumericError when either variance is zero.
double pearson(std::span<const double> x, std::span<const double> y);
/// Correlation over frames voiced in both contours.
double pearson_voiced(const signal::PitchContour& a, const signal::PitchContour& b);
/// 1-based ranks, ties share their mean rank.
std::vector<double> ranks(std::span<const double> x);
/// Pearson correlation of ranks.
double spearman(std::span<const double> x, std::span<const double> y);

/// Case-folded, punctuation stripped, whitespace collapsed.
std::string normalize_text(const std::string& text);

template <typename Seq>
std::size_t edit_distance(const Seq& a, const Seq& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct ErrorRates {
  double wer = 0.0;
  double cer = 0.0;
};

/// Levenshtein distance over words and characters of the normalised texts,
/// divided by the reference length. Throws ContractError on an empty reference.
ErrorRates wer_cer(const std::string& ref, const std::string& hyp);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace prvq::metrics
