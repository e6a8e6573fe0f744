#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ilm/autodiff.hpp"

namespace ilm {

// A named trainable tensor with its gradient and Adam moment buffers.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
  long step_count = 0;

  Parameter(std::string n, Matrix init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(Matrix::Zero(value.rows(), value.cols())),
        adam_m(Matrix::Zero(value.rows(), value.cols())),
        adam_v(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// In-place bias-corrected Adam update; gradients are left untouched.
void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg);

// Builds a loss graph given tape leaves, one per parameter, in order.
using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Runs the graph, backpropagates, and accumulates d(loss)/d(param) into each
// parameter's grad. Returns the loss value.
double forward_backward(const GraphFn& graph, std::span<Parameter* const> params);

// Forward pass only; no gradients touched.
double forward_value(const GraphFn& graph, std::span<Parameter* const> params);

struct FiniteDiffEntry {
  std::string name;
  double max_rel_error = 0.0;
};

// Per-parameter worst relative error between analytic and central-difference
// gradients. rel_error = |a - f| / max(|a|, |f|, 1e-6).
struct FiniteDiffReport {
  std::vector<FiniteDiffEntry> entries;
  double eps = 1e-5;
  double tolerance = 1e-4;
  bool passed = true;
};

FiniteDiffReport finite_diff_check(const GraphFn& graph, std::span<Parameter* const> params,
                                   double eps = 1e-5, double tolerance = 1e-4);

inline std::vector<Parameter*> param_ptrs(std::vector<Parameter>& params) {
  std::vector<Parameter*> out;
  out.reserve(params.size());
  for (auto& p : params) out.push_back(&p);
  return out;
}

}  // namespace ilm
