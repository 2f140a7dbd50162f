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

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prvq/tensor.hpp"

/// Tape-based reverse-mode differentiation over dense 2-D tensors.
///
/// A Graph records every operation in creation order, which is a topological
/// order; backward() walks it once in reverse. Ops are free functions taking
/// and returning Var handles. A Graph is single-threaded and short-lived: one
/// per forward/backward pass.
namespace prvq::ad {

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, std::uint32_t id) : g_(g), id_(id) {}

  Graph& graph() const { return *g_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return g_ != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph* g_ = nullptr;
  std::uint32_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn =
      std::function<void(Graph&, const Tensor& out_value, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is accumulated by backward().
  Var leaf(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient of the last backward() target; zeros if none reached this node.
  Tensor grad(Var v) const;

  /// Seeds d(target)/d(target) = 1 and propagates; `target` must be 1x1.
  void backward(Var target);

  std::size_t size() const { return nodes_.size(); }

  /// Records a node. `fn` runs during backward with the node's gradient.
  Var record(Tensor value, bool requires_grad, BackwardFn fn);
  /// Gradient accumulator of `v`, allocated on first use; nullptr when v needs none.
  Tensor* grad_sink(Var v);

  /// stop_gradient replay: while frozen, the k-th stop_gradient op returns
  /// `values[k]` instead of its argument's value. Used by grad_check so that
  /// finite differences see the straight-through branch as a constant.
  void freeze_stop_gradients(std::vector<Tensor> values);
  const std::vector<Tensor>& stop_gradient_values() const { return sg_values_; }
  Tensor next_stop_gradient_value(const Tensor& live);
  bool replaying_stop_gradients() const { return sg_replay_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
  std::vector<Tensor> sg_values_;
  std::vector<Tensor> sg_frozen_;
  bool sg_replay_ = false;
  std::size_t sg_cursor_ = 0;
};

// ---- element-wise -------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double k);
/// a * s for a 1x1 tensor s.
Var scale_by(Var a, Var s);
/// Adds a 1 x C row to every row of a R x C tensor.
Var add_row(Var a, Var row);
/// Multiplies every row of a by a 1 x C row.
Var mul_row(Var a, Var row);
Var sigmoid(Var a);
Var swish(Var a);
Var exp(Var a);
Var abs(Var a);
Var square(Var a);

// ---- structural ---------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
/// x W + b with W: in x out and b: 1 x out.
Var linear(Var x, Var w, Var b);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
/// Rows of `table` selected by `ids`.
Var embedding(Var table, std::span<const int> ids);
/// Rows where keep[r] is false are replaced by `fill`; no gradient flows there.
Var masked_fill(Var a, const std::vector<bool>& keep, double fill);

// ---- normalisation ------------------------------------------------------

/// Softmax along `axis` (1: within each row, 0: within each column).
Var softmax(Var a, int axis = 1);
/// Per-row standardisation followed by gain/bias (both 1 x C).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Divides each row by its sum.
Var normalize_rows(Var a);

enum class Padding { kSame, kCausal };

/// Depthwise 1-D convolution over rows (time). x: T x C, kernel: K x C, bias: 1 x C.
Var conv1d_depthwise(Var x, Var kernel, Var bias, Padding padding = Padding::kSame);

// ---- reductions ---------------------------------------------------------

Var sum(Var a);
Var mean(Var a);

/// Forward identity, zero gradient.
Var stop_gradient(Var a);

/// Straight-through estimator x + stop_gradient(target - x). The forward
/// value is `target` bit-for-bit; the gradient w.r.t. x is the identity.
Var straight_through(Var x, const Tensor& target);

// ---- checking and optimisation ------------------------------------------

using ScalarFn = std::function<Var(Graph&, Var)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  Tensor analytic;
  Tensor numeric;
};

/// Compares reverse-mode gradients of scalar `f` at `x` against central
/// differences; relative error per component is |a - n| / max(|a|, |n|, 1e-5).
GradCheckReport grad_check_report(const ScalarFn& f, const Tensor& x, double eps = 1e-6);
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-6);

using NamedTensors = std::map<std::string, Tensor>;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  NamedTensors m;
  NamedTensors v;
  long step = 0;
};

/// One bias-corrected Adam update. Throws NumericError, leaving everything
/// untouched, when any gradient is non-finite.
void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

/// Global L2 norm over all gradients.
double global_norm(const NamedTensors& grads);

}  // namespace prvq::ad
