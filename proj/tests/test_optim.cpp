#include "doctest.h"
#include "ilm/errors.hpp"
#include "ilm/optim.hpp"

#include <cmath>

using namespace ilm;

TEST_SUITE_BEGIN("optim");

TEST_CASE("zero gradient leaves parameters unchanged") {
  std::vector<Parameter> params;
  params.emplace_back("w", Matrix::Constant(2, 2, 1.5));
  auto ptrs = param_ptrs(params);
  adam_step(ptrs, AdamConfig{0.1});
  CHECK((params[0].value.array() == 1.5).all());
}

TEST_CASE("first update magnitude is about the learning rate") {
  // Closed-form first step: m_hat = g, v_hat = g^2, so the update is
  // lr * g / (|g| + eps) ~= lr * sign(g).
  std::vector<Parameter> params;
  params.emplace_back("w", Matrix::Constant(1, 1, 3.0));
  params[0].grad(0, 0) = 0.25;
  auto ptrs = param_ptrs(params);
  adam_step(ptrs, AdamConfig{0.1});
  CHECK(params[0].value(0, 0) == doctest::Approx(3.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("two steps on f(w)=w^2 from w=1 strictly decrease w") {
  std::vector<Parameter> params;
  params.emplace_back("w", Matrix::Constant(1, 1, 1.0));
  auto ptrs = param_ptrs(params);
  const GraphFn graph = [](Tape& t, const std::vector<Var>& p) {
    return mean_all(t, hadamard(t, p[0], p[0]));
  };
  double prev = 1.0;
  for (int step = 0; step < 2; ++step) {
    params[0].zero_grad();
    forward_backward(graph, ptrs);
    adam_step(ptrs, AdamConfig{0.1});
    CHECK(params[0].value(0, 0) < prev);
    prev = params[0].value(0, 0);
  }
}

TEST_CASE("gradients accumulate until the caller zeroes them") {
  std::vector<Parameter> params;
  params.emplace_back("w", Matrix::Constant(1, 1, 2.0));
  auto ptrs = param_ptrs(params);
  const GraphFn graph = [](Tape& t, const std::vector<Var>& p) { return sum_all(t, p[0]); };
  forward_backward(graph, ptrs);
  forward_backward(graph, ptrs);
  CHECK(params[0].grad(0, 0) == doctest::Approx(2.0));
  params[0].zero_grad();
  forward_backward(graph, ptrs);
  CHECK(params[0].grad(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("adam step count drives bias correction per parameter") {
  std::vector<Parameter> params;
  params.emplace_back("w", Matrix::Constant(1, 1, 0.0));
  auto ptrs = param_ptrs(params);
  for (int i = 0; i < 3; ++i) {
    params[0].grad(0, 0) = 1.0;
    adam_step(ptrs, AdamConfig{0.01});
  }
  CHECK(params[0].step_count == 3);
  // constant gradient: every bias-corrected step is ~lr
  CHECK(params[0].value(0, 0) == doctest::Approx(-0.03).epsilon(1e-4));
}

TEST_SUITE_END();
