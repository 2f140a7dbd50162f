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
#include <memory>

#include "prvq/autodiff.hpp"
#include "prvq/error.hpp"

namespace prvq::ad {

namespace {

bool needs_grad(Var v) { return v.graph().requires_grad(v); }

Graph& graph_of(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw ContractError("autodiff: operands belong to different graphs");
  return a.graph();
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

void require_same(const char* op, Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_fail(op, a.value(), b.value());
}

void require_row_of(const char* op, Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_fail(op, a.value(), row.value());
}

// Element-wise unary op with derivative given as f'(x, y).
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return a.graph().record(std::move(y), needs_grad(a),
                          [a, deriv](Graph& g, const Tensor& out, const Tensor& dy) {
                            Tensor* da = g.grad_sink(a);
                            const Tensor& x = g.value(a);
                            for (std::size_t i = 0; i < x.size(); ++i) (*da)[i] += dy[i] * deriv(x[i], out[i]);
                          });
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same("add", a, b);
  Tensor y = a.value();
  y.map() += b.value().map();
  return g.record(std::move(y), needs_grad(a) || needs_grad(b),
                  [a, b](Graph& g, const Tensor&, const Tensor& dy) {
                    if (Tensor* da = g.grad_sink(a)) da->map() += dy.map();
                    if (Tensor* db = g.grad_sink(b)) db->map() += dy.map();
                  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same("sub", a, b);
  Tensor y = a.value();
  y.map() -= b.value().map();
  return g.record(std::move(y), needs_grad(a) || needs_grad(b),
                  [a, b](Graph& g, const Tensor&, const Tensor& dy) {
                    if (Tensor* da = g.grad_sink(a)) da->map() += dy.map();
                    if (Tensor* db = g.grad_sink(b)) db->map() -= dy.map();
                  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same("mul", a, b);
  Tensor y = a.value();
  y.map().array() *= b.value().map().array();
  return g.record(std::move(y), needs_grad(a) || needs_grad(b),
                  [a, b](Graph& g, const Tensor&, const Tensor& dy) {
                    if (Tensor* da = g.grad_sink(a)) da->map().array() += dy.map().array() * g.value(b).map().array();
                    if (Tensor* db = g.grad_sink(b)) db->map().array() += dy.map().array() * g.value(a).map().array();
                  });
}

Var scale(Var a, double k) {
  Tensor y = a.value();
  y.map() *= k;
  return a.graph().record(std::move(y), needs_grad(a), [a, k](Graph& g, const Tensor&, const Tensor& dy) {
    g.grad_sink(a)->map() += k * dy.map();
  });
}

Var scale_by(Var a, Var s) {
  Graph& g = graph_of(a, s);
  if (s.rows() != 1 || s.cols() != 1) shape_fail("scale_by", a.value(), s.value());
  Tensor y = a.value();
  y.map() *= s.value()[0];
  return g.record(std::move(y), needs_grad(a) || needs_grad(s),
                  [a, s](Graph& g, const Tensor&, const Tensor& dy) {
                    if (Tensor* da = g.grad_sink(a)) da->map() += g.value(s)[0] * dy.map();
                    if (Tensor* ds = g.grad_sink(s)) (*ds)[0] += (dy.map().array() * g.value(a).map().array()).sum();
                  });
}

Var add_row(Var a, Var row) {
  Graph& g = graph_of(a, row);
  require_row_of("add_row", a, row);
  Tensor y = a.value();
  y.map().rowwise() += row.value().map().row(0);
  return g.record(std::move(y), needs_grad(a) || needs_grad(row),
                  [a, row](Graph& g, const Tensor&, const Tensor& dy) {
                    if (Tensor* da = g.grad_sink(a)) da->map() += dy.map();
                    if (Tensor* dr = g.grad_sink(row)) dr->map() += dy.map().colwise().sum();
                  });
}

Var mul_row(Var a, Var row) {
  Graph& g = graph_of(a, row);
  require_row_of("mul_row", a, row);
  Tensor y = a.value();
  y.map().array().rowwise() *= row.value().map().array().row(0);
  return g.record(std::move(y), needs_grad(a) || needs_grad(row),
                  [a, row](Graph& g, const Tensor&, const Tensor& dy) {
                    if (Tensor* da = g.grad_sink(a)) {
                      da->map().array() += dy.map().array().rowwise() * g.value(row).map().array().row(0);
                    }
                    if (Tensor* dr = g.grad_sink(row)) {
                      dr->map() += (dy.map().array() * g.value(a).map().array()).matrix().colwise().sum();
                    }
                  });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var swish(Var a) {
  return unary(a, [](double x) { return x * sigmoid_scalar(x); },
               [](double x, double) {
                 const double s = sigmoid_scalar(x);
                 return s + x * s * (1.0 - s);
               });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  Tensor y(a.rows(), b.cols());
  y.map().noalias() = a.value().map() * b.value().map();
  return g.record(std::move(y), needs_grad(a) || needs_grad(b),
                  [a, b](Graph& g, const Tensor&, const Tensor& dy) {
                    if (Tensor* da = g.grad_sink(a)) da->map().noalias() += dy.map() * g.value(b).map().transpose();
                    if (Tensor* db = g.grad_sink(b)) db->map().noalias() += g.value(a).map().transpose() * dy.map();
                  });
}

Var transpose(Var a) {
  Tensor y(a.cols(), a.rows());
  y.map() = a.value().map().transpose();
  return a.graph().record(std::move(y), needs_grad(a), [a](Graph& g, const Tensor&, const Tensor& dy) {
    g.grad_sink(a)->map() += dy.map().transpose();
  });
}

Var linear(Var x, Var w, Var b) {
  Graph& g = graph_of(x, w);
  graph_of(x, b);
  if (x.cols() != w.rows()) shape_fail("linear", x.value(), w.value());
  if (b.rows() != 1 || b.cols() != w.cols()) shape_fail("linear(bias)", w.value(), b.value());
  Tensor y(x.rows(), w.cols());
  y.map().noalias() = x.value().map() * w.value().map();
  y.map().rowwise() += b.value().map().row(0);
  return g.record(std::move(y), needs_grad(x) || needs_grad(w) || needs_grad(b),
                  [x, w, b](Graph& g, const Tensor&, const Tensor& dy) {
                    if (Tensor* dx = g.grad_sink(x)) dx->map().noalias() += dy.map() * g.value(w).map().transpose();
                    if (Tensor* dw = g.grad_sink(w)) dw->map().noalias() += g.value(x).map().transpose() * dy.map();
                    if (Tensor* db = g.grad_sink(b)) db->map() += dy.map().colwise().sum();
                  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  if (start + count > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + a.value().shape_string());
  }
  Tensor y(a.rows(), count);
  y.map() = a.value().map().middleCols(Eigen::Index(start), Eigen::Index(count));
  return a.graph().record(std::move(y), needs_grad(a),
                          [a, start, count](Graph& g, const Tensor&, const Tensor& dy) {
                            g.grad_sink(a)->map().middleCols(Eigen::Index(start), Eigen::Index(count)) += dy.map();
                          });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  Graph& g = parts[0].graph();
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool rg = false;
  for (Var p : parts) {
    graph_of(parts[0], p);
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    rg = rg || needs_grad(p);
  }
  Tensor y(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    y.map().middleCols(Eigen::Index(off), Eigen::Index(p.cols())) = p.value().map();
    off += p.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return g.record(std::move(y), rg, [owned](Graph& g, const Tensor&, const Tensor& dy) {
    std::size_t off = 0;
    for (Var p : owned) {
      if (Tensor* dp = g.grad_sink(p)) dp->map() += dy.map().middleCols(Eigen::Index(off), Eigen::Index(p.cols()));
      off += p.cols();
    }
  });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& t = table.value();
  Tensor y(ids.size(), t.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || std::size_t(ids[r]) >= t.rows()) {
      throw ShapeError("embedding: id " + std::to_string(ids[r]) + " out of range for table " + t.shape_string());
    }
    std::copy_n(t.row(std::size_t(ids[r])).data(), t.cols(), y.row(r).data());
  }
  std::vector<int> owned(ids.begin(), ids.end());
  return table.graph().record(std::move(y), needs_grad(table),
                              [table, owned](Graph& g, const Tensor&, const Tensor& dy) {
                                Tensor* dt = g.grad_sink(table);
                                for (std::size_t r = 0; r < owned.size(); ++r) {
                                  auto dst = dt->row(std::size_t(owned[r]));
                                  auto src = dy.row(r);
                                  for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                                }
                              });
}

Var masked_fill(Var a, const std::vector<bool>& keep, double fill) {
  if (keep.size() != a.rows()) {
    throw ShapeError("masked_fill: mask of length " + std::to_string(keep.size()) + " for " +
                     a.value().shape_string());
  }
  Tensor y = a.value();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    if (!keep[r]) std::fill(y.row(r).begin(), y.row(r).end(), fill);
  }
  return a.graph().record(std::move(y), needs_grad(a), [a, keep](Graph& g, const Tensor&, const Tensor& dy) {
    Tensor* da = g.grad_sink(a);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      if (!keep[r]) continue;
      auto dst = da->row(r);
      auto src = dy.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var softmax(Var a, int axis) {
  if (axis != 0 && axis != 1) throw ContractError("softmax: axis must be 0 or 1");
  if (axis == 0) return transpose(softmax(transpose(a), 1));
  Tensor y = a.value();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      s += v;
    }
    for (double& v : row) v /= s;
  }
  return a.graph().record(std::move(y), needs_grad(a), [a](Graph& g, const Tensor& out, const Tensor& dy) {
    Tensor* da = g.grad_sink(a);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      const auto yr = out.row(r);
      const auto gr = dy.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      auto dst = da->row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) dst[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = graph_of(x, gain);
  graph_of(x, bias);
  require_row_of("layer_norm(gain)", x, gain);
  require_row_of("layer_norm(bias)", x, bias);
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  auto normed = std::make_shared<Tensor>(rows, cols);
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor y(rows, cols);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto xr = xv.row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= double(cols);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= double(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double n = (xr[c] - mu) * is;
      (*normed)(r, c) = n;
      y(r, c) = n * gv[c] + bv[c];
    }
  }
  return g.record(std::move(y), needs_grad(x) || needs_grad(gain) || needs_grad(bias),
                  [x, gain, bias, normed, inv_std](Graph& g, const Tensor&, const Tensor& dy) {
                    const std::size_t rows = dy.rows(), cols = dy.cols();
                    if (Tensor* dg = g.grad_sink(gain)) dg->map() += (dy.map().array() * normed->map().array()).matrix().colwise().sum();
                    if (Tensor* db = g.grad_sink(bias)) db->map() += dy.map().colwise().sum();
                    Tensor* dx = g.grad_sink(x);
                    if (!dx) return;
                    const auto& gv = g.value(gain);
                    std::vector<double> dn(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mean_dn = 0.0, mean_dn_n = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        dn[c] = dy(r, c) * gv[c];
                        mean_dn += dn[c];
                        mean_dn_n += dn[c] * (*normed)(r, c);
                      }
                      mean_dn /= double(cols);
                      mean_dn_n /= double(cols);
                      for (std::size_t c = 0; c < cols; ++c) {
                        (*dx)(r, c) += (*inv_std)[r] * (dn[c] - mean_dn - (*normed)(r, c) * mean_dn_n);
                      }
                    }
                  });
}

Var normalize_rows(Var a) {
  Tensor y = a.value();
  std::vector<double> sums(y.rows());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double s = 0.0;
    for (double v : y.row(r)) s += v;
    if (s == 0.0) throw NumericError("normalize_rows: row " + std::to_string(r) + " sums to zero");
    sums[r] = s;
    for (double& v : y.row(r)) v /= s;
  }
  return a.graph().record(std::move(y), needs_grad(a), [a, sums](Graph& g, const Tensor& out, const Tensor& dy) {
    Tensor* da = g.grad_sink(a);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < out.cols(); ++c) dot += dy(r, c) * out(r, c);
      for (std::size_t c = 0; c < out.cols(); ++c) (*da)(r, c) += (dy(r, c) - dot) / sums[r];
    }
  });
}

Var conv1d_depthwise(Var x, Var kernel, Var bias, Padding padding) {
  Graph& g = graph_of(x, kernel);
  graph_of(x, bias);
  if (kernel.cols() != x.cols()) shape_fail("conv1d_depthwise", x.value(), kernel.value());
  require_row_of("conv1d_depthwise(bias)", x, bias);
  const std::ptrdiff_t taps = std::ptrdiff_t(kernel.rows());
  const std::ptrdiff_t left = padding == Padding::kSame ? (taps - 1) / 2 : taps - 1;
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const std::ptrdiff_t steps = std::ptrdiff_t(xv.rows());
  const std::size_t ch = xv.cols();
  Tensor y(xv.rows(), ch);
  for (std::ptrdiff_t t = 0; t < steps; ++t) {
    auto yr = y.row(std::size_t(t));
    for (std::size_t c = 0; c < ch; ++c) yr[c] = bias.value()[c];
    for (std::ptrdiff_t k = 0; k < taps; ++k) {
      const std::ptrdiff_t src = t + k - left;
      if (src < 0 || src >= steps) continue;
      const auto xr = xv.row(std::size_t(src));
      const auto kr = kv.row(std::size_t(k));
      for (std::size_t c = 0; c < ch; ++c) yr[c] += kr[c] * xr[c];
    }
  }
  return g.record(std::move(y), needs_grad(x) || needs_grad(kernel) || needs_grad(bias),
                  [x, kernel, bias, left](Graph& g, const Tensor&, const Tensor& dy) {
                    const Tensor& xv = g.value(x);
                    const Tensor& kv = g.value(kernel);
                    Tensor* dx = g.grad_sink(x);
                    Tensor* dk = g.grad_sink(kernel);
                    if (Tensor* db = g.grad_sink(bias)) db->map() += dy.map().colwise().sum();
                    const std::ptrdiff_t steps = std::ptrdiff_t(xv.rows());
                    const std::ptrdiff_t taps = std::ptrdiff_t(kv.rows());
                    const std::size_t ch = xv.cols();
                    for (std::ptrdiff_t t = 0; t < steps; ++t) {
                      const auto gr = dy.row(std::size_t(t));
                      for (std::ptrdiff_t k = 0; k < taps; ++k) {
                        const std::ptrdiff_t src = t + k - left;
                        if (src < 0 || src >= steps) continue;
                        if (dx) {
                          auto dxr = dx->row(std::size_t(src));
                          const auto kr = kv.row(std::size_t(k));
                          for (std::size_t c = 0; c < ch; ++c) dxr[c] += kr[c] * gr[c];
                        }
                        if (dk) {
                          auto dkr = dk->row(std::size_t(k));
                          const auto xr = xv.row(std::size_t(src));
                          for (std::size_t c = 0; c < ch; ++c) dkr[c] += xr[c] * gr[c];
                        }
                      }
                    }
                  });
}

Var sum(Var a) {
  Tensor y(1, 1, a.value().map().sum());
  return a.graph().record(std::move(y), needs_grad(a), [a](Graph& g, const Tensor&, const Tensor& dy) {
    g.grad_sink(a)->map().array() += dy[0];
  });
}

Var mean(Var a) {
  const double n = double(a.value().size());
  if (n == 0.0) throw ShapeError("mean: empty tensor");
  Tensor y(1, 1, a.value().map().sum() / n);
  return a.graph().record(std::move(y), needs_grad(a), [a, n](Graph& g, const Tensor&, const Tensor& dy) {
    g.grad_sink(a)->map().array() += dy[0] / n;
  });
}

Var stop_gradient(Var a) {
  Graph& g = a.graph();
  return g.constant(g.next_stop_gradient_value(a.value()));
}

Var straight_through(Var x, const Tensor& target) {
  if (!x.value().same_shape(target)) shape_fail("straight_through", x.value(), target);
  Graph& g = x.graph();
  Tensor delta = target;
  delta.map() -= x.value().map();
  const bool replay = g.replaying_stop_gradients();
  delta = g.next_stop_gradient_value(delta);
  Tensor y;
  if (replay) {
    y = x.value();
    y.map() += delta.map();
  } else {
    y = target;
  }
  return g.record(std::move(y), needs_grad(x), [x](Graph& g, const Tensor&, const Tensor& dy) {
    g.grad_sink(x)->map() += dy.map();
  });
}

}  // namespace prvq::ad
