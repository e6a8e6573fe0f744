#include "ilm/optim.hpp"

#include <cmath>

#include "ilm/errors.hpp"

namespace ilm {

void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg) {
  for (Parameter* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols())
      fail(Errc::shape_mismatch, "adam_step: grad shape mismatch for " + p->name);
    p->step_count += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step_count));
    p->adam_m = cfg.beta1 * p->adam_m + (1.0 - cfg.beta1) * p->grad;
    p->adam_v = cfg.beta2 * p->adam_v.array() + (1.0 - cfg.beta2) * p->grad.array().square();
    p->value.array() -=
        cfg.learning_rate * (p->adam_m.array() / bc1) / ((p->adam_v.array() / bc2).sqrt() + cfg.eps);
    if (!p->value.allFinite()) fail(Errc::non_finite, "adam_step produced non-finite " + p->name);
  }
}

namespace {

Var run_graph(Tape& tape, const GraphFn& graph, std::span<Parameter* const> params, bool with_grad) {
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Parameter* p : params) leaves.push_back(tape.input(p->value, with_grad));
  return graph(tape, leaves);
}

}  // namespace

double forward_backward(const GraphFn& graph, std::span<Parameter* const> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Parameter* p : params) leaves.push_back(tape.input(p->value, true));
  const Var loss = graph(tape, leaves);
  tape.backward(loss);
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad += tape.grad(leaves[i]);
  return tape.scalar(loss);
}

double forward_value(const GraphFn& graph, std::span<Parameter* const> params) {
  Tape tape;
  return tape.scalar(run_graph(tape, graph, params, false));
}

FiniteDiffReport finite_diff_check(const GraphFn& graph, std::span<Parameter* const> params,
                                   double eps, double tolerance) {
  FiniteDiffReport report;
  report.eps = eps;
  report.tolerance = tolerance;

  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) p->zero_grad();
  forward_backward(graph, params);
  for (Parameter* p : params) analytic.push_back(p->grad);
  for (Parameter* p : params) p->zero_grad();

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    FiniteDiffEntry entry{p->name, 0.0};
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        const double saved = p->value(r, c);
        p->value(r, c) = saved + eps;
        const double up = forward_value(graph, params);
        p->value(r, c) = saved - eps;
        const double down = forward_value(graph, params);
        p->value(r, c) = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double an = analytic[pi](r, c);
        const double denom = std::max({std::abs(an), std::abs(fd), 1e-6});
        entry.max_rel_error = std::max(entry.max_rel_error, std::abs(an - fd) / denom);
      }
    }
    if (entry.max_rel_error > tolerance) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace ilm
