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

#include "prvq/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "prvq/error.hpp"

namespace prvq::metrics {
namespace {

void same_shape(const signal::MelSpectrogram& a, const signal::MelSpectrogram& b, const char* op) {
  if (!a.values.same_shape(b.values)) {
    throw ShapeError(std::string(op) + ": reference " + a.values.shape_string() + " vs hypothesis " +
                     b.values.shape_string());
  }
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

void MetricReport::validate() const {
  for (auto f : {vde, gpe, ffe}) {
    if (f && (*f < 0.0 || *f > 1.0)) throw ContractError("metric report: fraction outside [0, 1]");
  }
  for (auto r : {pearson_f0, pearson_energy}) {
    if (r && (*r < -1.0 - 1e-12 || *r > 1.0 + 1e-12)) throw ContractError("metric report: correlation outside [-1, 1]");
  }
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  auto put = [&](const char* k, const std::optional<double>& v) {
    if (v) j[k] = *v;
  };
  put("psnr", psnr);
  put("mcd", mcd);
  put("vde", vde);
  put("gpe", gpe);
  put("ffe", ffe);
  put("pearson_f0", pearson_f0);
  put("pearson_energy", pearson_energy);
  put("wer", wer);
  put("cer", cer);
  put("l1", l1);
  return j.dump(2);
}

std::string MetricReport::csv_header() { return "psnr,mcd,vde,gpe,ffe,pearson_f0,pearson_energy,wer,cer,l1"; }

std::string MetricReport::csv_row() const {
  std::ostringstream out;
  out.precision(10);
  bool first = true;
  for (const auto& v : {psnr, mcd, vde, gpe, ffe, pearson_f0, pearson_energy, wer, cer, l1}) {
    if (!first) out << ',';
    first = false;
    if (v) out << *v;
  }
  return out.str();
}

double psnr_mel(const signal::MelSpectrogram& ref, const signal::MelSpectrogram& hyp) {
  same_shape(ref, hyp, "psnr");
  if (ref.values.empty()) throw ContractError("psnr: empty spectrogram");
  const auto r = ref.values.map();
  const double range = r.maxCoeff() - r.minCoeff();
  const double mse = (r - hyp.values.map()).array().square().mean();
  if (!std::isfinite(mse)) throw NumericError("psnr: non-finite error");
  if (mse < 1e-12) return kPsnrCap;
  if (range <= 0.0) throw NumericError("psnr: reference has zero dynamic range");
  return std::min(kPsnrCap, 10.0 * std::log10(range * range / mse));
}

Tensor mel_cepstrum(const signal::MelSpectrogram& mel, std::size_t count) {
  const std::size_t m = mel.bands();
  if (count > m) throw ContractError("mel_cepstrum: more coefficients than bands");
  // Orthonormal DCT-II basis, count x M.
  RowMatrix basis(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < count; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / double(m)) : std::sqrt(2.0 / double(m));
    for (std::size_t n = 0; n < m; ++n) {
      basis(Eigen::Index(k), Eigen::Index(n)) = s * std::cos(std::numbers::pi * (double(n) + 0.5) * double(k) / double(m));
    }
  }
  return Tensor::from_eigen(mel.values.map() * basis.transpose());
}

double mcd_from_cepstra(const Tensor& ref, const Tensor& hyp) {
  if (!ref.same_shape(hyp)) throw ShapeError("mcd: cepstra " + ref.shape_string() + " vs " + hyp.shape_string());
  if (ref.rows() == 0) throw ContractError("mcd: no frames");
  if (ref.cols() < 2) throw ContractError("mcd: need coefficients beyond c0");
  const double k = 10.0 / std::numbers::ln10 * std::numbers::sqrt2;
  const auto diff = (ref.map() - hyp.map()).rightCols(Eigen::Index(ref.cols() - 1));
  return k * diff.rowwise().norm().mean();
}

double mcd(const signal::MelSpectrogram& ref, const signal::MelSpectrogram& hyp) {
  same_shape(ref, hyp, "mcd");
  const std::size_t n = std::min<std::size_t>(14, ref.bands());
  return mcd_from_cepstra(mel_cepstrum(ref, n), mel_cepstrum(hyp, n));
}

F0Errors f0_errors(const signal::PitchContour& ref, const signal::PitchContour& hyp, double threshold) {
  if (ref.size() != hyp.size()) {
    throw ShapeError("f0_errors: " + std::to_string(ref.size()) + " reference frames vs " + std::to_string(hyp.size()));
  }
  if (ref.size() == 0) throw ContractError("f0_errors: empty contours");
  std::size_t flips = 0, both = 0, gross = 0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (ref.voiced[t] != hyp.voiced[t]) {
      ++flips;
    } else if (ref.voiced[t]) {
      ++both;
      if (std::abs(hyp.f0[t] - ref.f0[t]) > threshold * ref.f0[t]) ++gross;
    }
  }
  const double t = double(ref.size());
  return {double(flips) / t, both ? double(gross) / double(both) : 0.0, double(flips + gross) / t};
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: series lengths differ");
  if (x.size() < 2) throw ContractError("pearson: need at least two samples");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw NumericError("pearson: correlation undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson_voiced(const signal::PitchContour& a, const signal::PitchContour& b) {
  if (a.size() != b.size()) throw ShapeError("pearson: contour lengths differ");
  std::vector<double> x, y;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a.voiced[t] && b.voiced[t]) {
      x.push_back(a.f0[t]);
      y.push_back(b.f0[t]);
    }
  }
  return pearson(x, y);
}

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double mean_rank = 0.5 * double(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) r[order[m]] = mean_rank;
    i = j + 1;
  }
  return r;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman: series lengths differ");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pearson(rx, ry);
}

std::string normalize_text(const std::string& text) {
  std::string out;
  bool space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      space = !out.empty();
    } else if (!std::ispunct(c)) {
      if (space) out.push_back(' ');
      space = false;
      out.push_back(char(std::tolower(c)));
    }
  }
  return out;
}

ErrorRates wer_cer(const std::string& ref, const std::string& hyp) {
  const std::string r = normalize_text(ref), h = normalize_text(hyp);
  if (r.empty()) throw ContractError("wer_cer: empty reference transcript");
  const auto rw = split_words(r), hw = split_words(h);
  return {double(edit_distance(rw, hw)) / double(rw.size()), double(edit_distance(r, h)) / double(r.size())};
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("cosine_similarity: vectors must be non-empty and equal length");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw NumericError("cosine_similarity: zero vector");
  return ab / std::sqrt(aa * bb);
}

}  // namespace prvq::metrics
