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

#include <cmath>

#include "prvq/autodiff.hpp"
#include "prvq/error.hpp"

namespace prvq::ad {

const Tensor& Var::value() const { return g_->value(*this); }

Var Graph::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Graph::leaf(Tensor value) { return record(std::move(value), true, nullptr); }

Var Graph::record(Tensor value, bool requires_grad, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, requires_grad ? std::move(fn) : nullptr});
  return Var(this, std::uint32_t(nodes_.size() - 1));
}

Tensor* Graph::grad_sink(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return &n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Var target) {
  Node& out = nodes_[target.id()];
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw ShapeError("backward: target must be 1x1, got " + out.value.shape_string());
  }
  if (!out.requires_grad) return;
  for (auto& n : nodes_) n.grad = Tensor{};
  out.grad = Tensor(1, 1, 1.0);
  for (std::size_t i = target.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, n.value, n.grad);
  }
}

void Graph::freeze_stop_gradients(std::vector<Tensor> values) {
  sg_frozen_ = std::move(values);
  sg_replay_ = true;
  sg_cursor_ = 0;
}

Tensor Graph::next_stop_gradient_value(const Tensor& live) {
  if (sg_replay_) {
    if (sg_cursor_ >= sg_frozen_.size() || !sg_frozen_[sg_cursor_].same_shape(live)) {
      throw ContractError("stop_gradient replay does not match the recorded graph");
    }
    return sg_frozen_[sg_cursor_++];
  }
  sg_values_.push_back(live);
  return live;
}

// Central differences carry ~1e-10 rounding noise, so exactly-zero gradients
// need an absolute floor in the denominator.
constexpr double kRelFloor = 1e-5;

GradCheckReport grad_check_report(const ScalarFn& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
  GradCheckReport rep;
  std::vector<Tensor> frozen;
  {
    Graph g;
    Var xv = g.leaf(x);
    Var y = f(g, xv);
    if (!y.value().all_finite()) throw NumericError("grad_check: non-finite function value");
    g.backward(y);
    rep.analytic = g.grad(xv);
    frozen = g.stop_gradient_values();
  }
  if (!rep.analytic.all_finite()) throw NumericError("grad_check: non-finite gradient");

  auto eval = [&](const Tensor& at) {
    Graph g;
    g.freeze_stop_gradients(frozen);
    const double v = f(g, g.leaf(at)).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };
  rep.numeric = Tensor(x.rows(), x.cols());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = eval(probe);
    probe[i] = x[i] - eps;
    const double down = eval(probe);
    probe[i] = x[i];
    rep.numeric[i] = (up - down) / (2.0 * eps);
    const double a = rep.analytic[i], n = rep.numeric[i];
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), kRelFloor});
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
  }
  return rep;
}

double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  return grad_check_report(f, x, eps).max_rel_error;
}

double global_norm(const NamedTensors& grads) {
  double acc = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.values()) acc += v * v;
  }
  return std::sqrt(acc);
}

void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("adam_step: gradient for unknown parameter " + name);
    if (!it->second.same_shape(g)) {
      throw ShapeError("adam_step: " + name + " param " + it->second.shape_string() + " vs grad " +
                       g.shape_string());
    }
    if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient for " + name);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [mit, mnew] = state.m.try_emplace(name, g.rows(), g.cols());
    auto [vit, vnew] = state.v.try_emplace(name, g.rows(), g.cols());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

}  // namespace prvq::ad
