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

#include "prvq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "prvq/error.hpp"
#include "prvq/random.hpp"

namespace prvq::analysis {

void ConditionalPMF::validate() const {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ContractError("pmf: negative or NaN probability");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ContractError("pmf: probabilities sum to " + std::to_string(s));
}

std::vector<ConditionalPMF> conditional_pmfs(std::span<const std::pair<int, int>> pairs, std::size_t k, double alpha) {
  if (k < 2) throw ContractError("conditional_pmfs: K must be >= 2");
  if (pairs.empty()) throw ContractError("conditional_pmfs: no observations");
  if (!(alpha >= 0.0)) throw ContractError("conditional_pmfs: smoothing must be >= 0");
  std::map<int, std::vector<long>> counts;
  for (auto [cond, code] : pairs) {
    if (code < 0 || std::size_t(code) >= k) throw ContractError("conditional_pmfs: code " + std::to_string(code) + " out of range");
    auto& c = counts[cond];
    if (c.empty()) c.assign(k, 0);
    ++c[std::size_t(code)];
  }
  std::vector<ConditionalPMF> out;
  for (const auto& [cond, c] : counts) {
    ConditionalPMF p;
    p.condition = cond;
    p.count = std::accumulate(c.begin(), c.end(), 0L);
    const double denom = double(p.count) + alpha * double(k);
    for (long v : c) p.p.push_back((double(v) + alpha) / denom);
    out.push_back(std::move(p));
  }
  return out;
}

double entropy_nats(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::vector<std::pair<int, int>> code_pairs(std::span<const vq::CodeSequence> codes,
                                            std::span<const corpus::Utterance> utterances, std::size_t level,
                                            bool by_phoneme) {
  if (codes.size() != utterances.size()) throw ShapeError("code_pairs: one code sequence per utterance required");
  std::vector<std::pair<int, int>> out;
  for (std::size_t u = 0; u < codes.size(); ++u) {
    if (level >= codes[u].num_levels()) throw ContractError("code_pairs: level out of range");
    const auto& c = codes[u].codes[level];
    if (c.size() != utterances[u].phonemes.size()) throw ShapeError("code_pairs: codes do not match phonemes of " + utterances[u].id);
    for (std::size_t n = 0; n < c.size(); ++n) {
      out.emplace_back(by_phoneme ? utterances[u].phonemes[n] : utterances[u].speaker_id, c[n]);
    }
  }
  return out;
}

double level_dependency(std::span<const vq::CodeSequence> sequences, std::size_t k, double alpha) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& s : sequences) {
    if (s.num_levels() < 2) throw ContractError("level_dependency: need two levels");
    for (std::size_t n = 0; n < s.size(); ++n) pairs.emplace_back(s.codes[0][n], s.codes[1][n]);
  }
  const auto pmfs = conditional_pmfs(pairs, k, alpha);
  double h = 0.0;
  for (const auto& p : pmfs) h += entropy_nats(p);
  return h / double(pmfs.size());
}

Tensor symmetric_kl_matrix(std::span<const ConditionalPMF> pmfs) {
  const std::size_t n = pmfs.size();
  if (n == 0) throw ContractError("symmetric_kl_matrix: no distributions");
  const std::size_t k = pmfs[0].p.size();
  for (const auto& p : pmfs) {
    if (p.p.size() != k) throw ShapeError("symmetric_kl_matrix: distributions differ in K");
    for (double v : p.p) {
      if (!(v > 0.0)) throw NumericError("symmetric_kl_matrix: zero probability; smooth the histograms (alpha > 0)");
    }
  }
  Tensor d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double a = pmfs[i].p[c], b = pmfs[j].p[c];
        s += (a - b) * (std::log(a) - std::log(b));
      }
      d(i, j) = d(j, i) = s;
    }
  }
  return d;
}

const char* to_string(EmbedMethod m) { return m == EmbedMethod::kMds ? "mds" : "tsne"; }

EmbedMethod parse_embed_method(const std::string& s) {
  if (s == "mds") return EmbedMethod::kMds;
  if (s == "tsne") return EmbedMethod::kTsne;
  throw ConfigError("unknown embedding method '" + s + "' (expected mds or tsne)");
}

namespace {

void check_distances(const Tensor& d) {
  if (d.rows() != d.cols()) throw ContractError("embed_2d: distance matrix is not square");
  for (std::size_t i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0) throw ContractError("embed_2d: non-zero diagonal");
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(d(i, j) - d(j, i)) > 1e-12 * std::max(1.0, std::abs(d(i, j)))) {
        throw ContractError("embed_2d: distance matrix is not symmetric at (" + std::to_string(i) + ", " +
                            std::to_string(j) + ")");
      }
    }
  }
}

void orient_columns(RowMatrix& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Eigen::Index arg = 0;
    m.col(c).cwiseAbs().maxCoeff(&arg);
    if (m(arg, c) < 0.0) m.col(c) *= -1.0;
  }
}

}  // namespace

Tensor classical_mds(const Tensor& d, std::size_t dims) {
  const auto n = Eigen::Index(d.rows());
  const Eigen::MatrixXd d2 = d.map().array().square().matrix();
  const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / double(n));
  const Eigen::MatrixXd b = -0.5 * j * d2 * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
  RowMatrix out = RowMatrix::Zero(n, Eigen::Index(dims));
  for (std::size_t c = 0; c < dims && Eigen::Index(c) < n; ++c) {
    const Eigen::Index idx = n - 1 - Eigen::Index(c);  // eigenvalues ascend
    const double lambda = eig.eigenvalues()(idx);
    if (lambda > 0.0) out.col(Eigen::Index(c)) = eig.eigenvectors().col(idx) * std::sqrt(lambda);
  }
  orient_columns(out);
  return Tensor::from_eigen(out);
}

Tensor tsne(const Tensor& d, const TsneOptions& opts) {
  const std::size_t n = d.rows();
  if (n < 2) return Tensor(n, 2);
  if (!(opts.perplexity > 0.0) || opts.perplexity >= double(n)) {
    throw ContractError("tsne: perplexity must be in (0, N)");
  }
  // Conditional affinities by bisection on the precision, matching ln(perplexity).
  RowMatrix p = RowMatrix::Zero(Eigen::Index(n), Eigen::Index(n));
  const double target = std::log(opts.perplexity);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
      double sum = 0.0, wsum = 0.0;
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) dmin = std::min(dmin, d(i, j));
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double v = std::exp(-beta * (d(i, j) - dmin));
        p(Eigen::Index(i), Eigen::Index(j)) = v;
        sum += v;
        wsum += v * (d(i, j) - dmin);
      }
      const double h = std::log(sum) + beta * wsum / sum;
      p.row(Eigen::Index(i)) /= sum;
      if (std::abs(h - target) < 1e-10) break;
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
  }
  RowMatrix pj = (p + p.transpose()) / (2.0 * double(n));
  pj = pj.cwiseMax(1e-12);

  rnd::Engine rng(opts.seed);
  RowMatrix y(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = 1e-2 * rnd::normal(rng);
  RowMatrix step = RowMatrix::Zero(y.rows(), 2), gains = RowMatrix::Ones(y.rows(), 2);
  const double lr = 200.0;
  const int exaggerate_until = std::min(250, opts.iterations / 4);
  RowMatrix q(static_cast<Eigen::Index>(n), Eigen::Index(n)), grad(Eigen::Index(n), 2);
  for (int it = 0; it < opts.iterations; ++it) {
    const double exaggeration = it < exaggerate_until ? 12.0 : 1.0;
    const double momentum = it < exaggerate_until ? 0.5 : 0.8;
    double qsum = 0.0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      q(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < q.cols(); ++j) {
        const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        q(i, j) = q(j, i) = v;
        qsum += 2.0 * v;
      }
    }
    grad.setZero();
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      for (Eigen::Index j = 0; j < q.cols(); ++j) {
        if (i == j) continue;
        const double coef = (exaggeration * pj(i, j) - q(i, j) / qsum) * q(i, j);
        grad.row(i) += 4.0 * coef * (y.row(i) - y.row(j));
      }
    }
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      double& g = gains.data()[i];
      g = (grad.data()[i] > 0.0) != (step.data()[i] > 0.0) ? g + 0.2 : std::max(0.01, g * 0.8);
      step.data()[i] = momentum * step.data()[i] - lr * g * grad.data()[i];
      y.data()[i] += step.data()[i];
    }
    y.rowwise() -= y.colwise().mean();
  }
  return Tensor::from_eigen(y);
}

Tensor embed_2d(const Tensor& d, EmbedMethod method, const TsneOptions& opts) {
  check_distances(d);
  return method == EmbedMethod::kMds ? classical_mds(d, 2) : tsne(d, opts);
}

Tensor PCAProjection::project(const Tensor& x) const {
  if (x.cols() != mean.cols()) throw ShapeError("pca project: dimension mismatch");
  RowMatrix centred = x.map().rowwise() - mean.map().row(0);
  return Tensor::from_eigen(centred * components.map().transpose());
}

Tensor PCAProjection::reconstruct(const Tensor& coords) const {
  if (coords.cols() != components.rows()) throw ShapeError("pca reconstruct: dimension mismatch");
  RowMatrix x = coords.map() * components.map();
  x.rowwise() += mean.map().row(0);
  return Tensor::from_eigen(x);
}

PCAProjection pca(const Tensor& x, std::span<const double> weights) {
  const std::size_t n = x.rows(), dim = x.cols();
  if (n == 0 || dim == 0) throw ContractError("pca: empty input");
  if (!weights.empty() && weights.size() != n) throw ShapeError("pca: one weight per row required");
  Eigen::VectorXd w = Eigen::VectorXd::Ones(Eigen::Index(n));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ContractError("pca: negative weight");
    w(Eigen::Index(i)) = weights[i];
  }
  const double total = w.sum();
  if (!(total > 0.0)) throw ContractError("pca: weights sum to zero");
  const Eigen::RowVectorXd mu = (w.transpose() * x.map()) / total;
  const RowMatrix c = x.map().rowwise() - mu;
  const Eigen::MatrixXd cov = (c.transpose() * w.asDiagonal() * c) / total;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);

  PCAProjection p;
  p.mean = Tensor::from_eigen(mu);
  RowMatrix comps(static_cast<Eigen::Index>(dim), Eigen::Index(dim));
  double sum = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const Eigen::Index idx = Eigen::Index(dim - 1 - k);
    comps.row(Eigen::Index(k)) = eig.eigenvectors().col(idx).transpose();
    p.variance.push_back(std::max(0.0, eig.eigenvalues()(idx)));
    sum += p.variance.back();
  }
  RowMatrix cols = comps.transpose();
  orient_columns(cols);
  p.components = Tensor::from_eigen(cols.transpose());
  for (double v : p.variance) p.ratios.push_back(sum > 0.0 ? v / sum : 0.0);
  return p;
}

PCAProjection pca_codes(const vq::Codebook& book, std::span<const long> usage) {
  if (usage.size() != book.size()) throw ShapeError("pca_codes: usage histogram does not match codebook size");
  std::vector<double> w(usage.begin(), usage.end());
  const auto used = std::count_if(usage.begin(), usage.end(), [](long v) { return v > 0; });
  if (used < 3) throw ContractError("pca_codes: need at least 3 used codes, found " + std::to_string(used));
  auto p = pca(book.entries, w);
  if (p.variance.size() < 2 || p.variance[1] <= 1e-12 * std::max(p.variance[0], 1e-300)) {
    throw NumericError("pca_codes: used codes are degenerate (rank < 2)");
  }
  return p;
}

std::vector<int> select_path_codes(const PCAProjection& proj, const vq::Codebook& book, const PathOptions& opts,
                                   std::span<const long> usage) {
  if (opts.axis != 1 && opts.axis != 2) throw ContractError("select_path_codes: axis must be 1 or 2");
  if (opts.n_points < 2) throw ContractError("select_path_codes: n_points must be >= 2");
  if (!(opts.half_width >= 0.0)) throw ContractError("select_path_codes: negative corridor half-width");
  if (proj.components.rows() < 2) throw ContractError("select_path_codes: need two components");
  if (!usage.empty() && usage.size() != book.size()) throw ShapeError("select_path_codes: usage size mismatch");
  const Tensor coords = proj.project(book.entries);
  const std::size_t on = std::size_t(opts.axis - 1), off = 1 - on;

  std::vector<int> cand;
  for (std::size_t c = 0; c < book.size(); ++c) {
    if (!usage.empty() && usage[c] == 0) continue;
    if (std::abs(coords(c, off) - opts.center) <= opts.half_width) cand.push_back(int(c));
  }
  if (cand.empty()) {
    std::ostringstream msg;
    msg << "select_path_codes: no code lies within " << opts.half_width << " of PC" << (off + 1) << " = "
        << opts.center << "; widen the corridor";
    throw DataError(msg.str());
  }
  auto pos = [&](int c) { return coords(std::size_t(c), on); };
  double lo = pos(cand[0]), hi = lo;
  for (int c : cand) {
    lo = std::min(lo, pos(c));
    hi = std::max(hi, pos(c));
  }
  std::vector<int> chosen;
  std::vector<bool> taken(book.size(), false);
  const int n = std::min<int>(opts.n_points, int(cand.size()));
  for (int k = 0; k < n; ++k) {
    const double target = n == 1 ? lo : lo + (hi - lo) * double(k) / double(n - 1);
    int best = -1;
    for (int c : cand) {
      if (taken[std::size_t(c)]) continue;
      if (best < 0 || std::abs(pos(c) - target) < std::abs(pos(best) - target)) best = c;
    }
    taken[std::size_t(best)] = true;
    chosen.push_back(best);
  }
  std::sort(chosen.begin(), chosen.end(), [&](int a, int b) { return pos(a) < pos(b) || (pos(a) == pos(b) && a < b); });
  return chosen;
}

int most_frequent_code(std::span<const long> histogram) {
  if (histogram.empty()) throw ContractError("most_frequent_code: empty histogram");
  return int(std::max_element(histogram.begin(), histogram.end()) - histogram.begin());
}

signal::AudioBuffer synth_probe(const model::Model& m, const corpus::Utterance& reference, const std::vector<int>& codes,
                                int speaker, const signal::FeatureConfig& features) {
  if (codes.size() != m.rvq.levels.size()) {
    throw ContractError("synth_probe: " + std::to_string(codes.size()) + " codes for " +
                        std::to_string(m.rvq.levels.size()) + " levels");
  }
  std::vector<std::vector<int>> seq;
  for (int c : codes) seq.emplace_back(reference.phonemes.size(), c);
  auto mel = model::decode_codes(m, seq, reference.phonemes, reference.durations, speaker);
  mel.hop_length = features.hop_length;
  mel.n_fft = features.n_fft;
  mel.sample_rate = features.sample_rate;
  return signal::invert_mel(mel, features.griffin_lim_iterations);
}

ProbeMeasurement measure_probe(const signal::AudioBuffer& audio, int code, const PCAProjection& proj,
                               const vq::Codebook& book, const signal::FeatureConfig& features) {
  if (code < 0 || std::size_t(code) >= book.size()) throw ContractError("measure_probe: code out of range");
  ProbeMeasurement r;
  r.code = code;
  signal::F0Config fc;
  fc.f_min = features.f0_min;
  fc.f_max = features.f0_max;
  fc.threshold = features.yin_threshold;
  fc.frame_length = features.n_fft;
  fc.hop = features.hop_length;
  r.f0 = signal::mean_voiced_f0(signal::estimate_f0(audio, fc));
  const auto rms = signal::frame_rms(audio, features.hop_length, features.n_fft);
  r.rms = rms.empty() ? 0.0 : std::accumulate(rms.begin(), rms.end(), 0.0) / double(rms.size());
  Tensor v(1, book.dim());
  std::copy(book.entries.row(std::size_t(code)).begin(), book.entries.row(std::size_t(code)).end(), v.values().begin());
  const Tensor c = proj.project(v);
  r.pc1 = c(0, 0);
  r.pc2 = c.cols() > 1 ? c(0, 1) : 0.0;
  return r;
}

std::vector<std::vector<ProbeMeasurement>> speaker_relative_report(const model::Model& m, std::span<const int> path,
                                                                   int level2_code, const corpus::Utterance& reference,
                                                                   std::span<const int> speakers,
                                                                   const PCAProjection& proj,
                                                                   const signal::FeatureConfig& features) {
  if (speakers.size() < 2) throw ContractError("speaker_relative_report: need at least two speakers");
  std::vector<std::vector<ProbeMeasurement>> out;
  for (int s : speakers) {
    auto& rows = out.emplace_back();
    for (int c : path) {
      std::vector<int> codes(m.rvq.levels.size(), level2_code);
      codes[0] = c;
      auto r = measure_probe(synth_probe(m, reference, codes, s, features), c, proj, m.rvq.levels[0], features);
      r.level2_code = level2_code;
      r.speaker = s;
      rows.push_back(r);
    }
  }
  return out;
}

// ---- output --------------------------------------------------------------

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string pmf_csv(std::span<const ConditionalPMF> pmfs, std::span<const std::string> labels) {
  std::ostringstream out;
  out << std::setprecision(10) << "condition,label,count,entropy_nats,max_p,argmax\n";
  for (std::size_t i = 0; i < pmfs.size(); ++i) {
    const auto& p = pmfs[i];
    const auto it = std::max_element(p.p.begin(), p.p.end());
    out << p.condition << ',' << csv_escape(i < labels.size() ? labels[i] : std::to_string(p.condition)) << ','
        << p.count << ',' << entropy_nats(p) << ',' << *it << ',' << (it - p.p.begin()) << '\n';
  }
  return out.str();
}

std::string probes_csv(std::span<const ProbeMeasurement> rows) {
  std::ostringstream out;
  out << std::setprecision(10) << "speaker,code,level2_code,f0_hz,rms,pc1,pc2\n";
  for (const auto& r : rows) {
    out << r.speaker << ',' << r.code << ',' << r.level2_code << ',';
    if (r.f0) out << *r.f0;
    out << ',' << r.rms << ',' << r.pc1 << ',' << r.pc2 << '\n';
  }
  return out.str();
}

std::string matrix_csv(const Tensor& m, std::span<const std::string> labels) {
  std::ostringstream out;
  out << std::setprecision(10) << "label";
  for (std::size_t j = 0; j < m.cols(); ++j) out << ',' << csv_escape(j < labels.size() ? labels[j] : std::to_string(j));
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << csv_escape(i < labels.size() ? labels[i] : std::to_string(i));
    for (std::size_t j = 0; j < m.cols(); ++j) out << ',' << m(i, j);
    out << '\n';
  }
  return out.str();
}

std::string scatter_svg(std::span<const ScatterPoint> points, const std::string& title, const std::string& x_label,
                        const std::string& y_label) {
  constexpr double W = 640, H = 480, M = 56;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!points.empty()) {
    x0 = x1 = points[0].x;
    y0 = y1 = points[0].y;
    for (const auto& p : points) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
  }
  const double padx = std::max(1e-9, (x1 - x0) * 0.05), pady = std::max(1e-9, (y1 - y0) * 0.05);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
  auto sx = [&](double x) { return M + (x - x0) / (x1 - x0) * (W - 2 * M); };
  auto sy = [&](double y) { return H - M - (y - y0) / (y1 - y0) * (H - 2 * M); };

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
  out << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << W - 2 * M << "\" height=\"" << H - 2 * M
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = x0 + (x1 - x0) * t / 4.0, fy = y0 + (y1 - y0) * t / 4.0;
    out << "<text x=\"" << sx(fx) << "\" y=\"" << H - M + 16 << "\" text-anchor=\"middle\">" << std::setprecision(3)
        << fx << "</text>\n";
    out << "<text x=\"" << M - 6 << "\" y=\"" << sy(fy) + 4 << "\" text-anchor=\"end\">" << fy << "</text>\n"
        << std::setprecision(2);
  }
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << H / 2 << ")\">"
      << xml_escape(y_label) << "</text>\n";
  for (const auto& p : points) {
    out << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"" << (p.highlight ? 5 : 3.5)
        << "\" fill=\"" << (p.highlight ? "#d62728" : "#1f77b4") << "\" fill-opacity=\"0.8\"/>\n";
    if (!p.label.empty()) {
      out << "<text x=\"" << sx(p.x) + 6 << "\" y=\"" << sy(p.y) - 4 << "\">" << xml_escape(p.label) << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace prvq::analysis
