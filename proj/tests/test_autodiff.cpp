#include "doctest.h"
#include "ilm/autodiff.hpp"
#include "ilm/errors.hpp"
#include "ilm/optim.hpp"

#include <cmath>

using namespace ilm;

TEST_SUITE_BEGIN("autodiff");

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Runs `trials` finite-difference checks of a graph over freshly randomized
// parameters; the graph builder also sees the rng for shapes/targets.
void check_op(const char* name, int trials,
              const std::function<std::vector<Parameter>(Rng&)>& make_params,
              const std::function<GraphFn(Rng&)>& make_graph) {
  Rng rng(fnv1a64(name));
  for (int trial = 0; trial < trials; ++trial) {
    auto params = make_params(rng);
    auto graph = make_graph(rng);
    auto ptrs = param_ptrs(params);
    const auto report = finite_diff_check(graph, ptrs);
    if (!report.passed) {
      for (const auto& e : report.entries)
        MESSAGE(name, " trial ", trial, " param ", e.name, " rel err ", e.max_rel_error);
    }
    REQUIRE(report.passed);
  }
}

}  // namespace

TEST_CASE("mean of w*w has gradient 2w/n") {
  Rng rng(1);
  std::vector<Parameter> params;
  params.emplace_back("w", random_matrix(rng, 3, 3));
  auto ptrs = param_ptrs(params);
  const GraphFn graph = [](Tape& t, const std::vector<Var>& p) {
    return mean_all(t, hadamard(t, p[0], p[0]));
  };
  const double loss = forward_backward(graph, ptrs);
  CHECK(loss == doctest::Approx((params[0].value.array().square().sum()) / 9.0));
  const Matrix expected = 2.0 * params[0].value / 9.0;
  CHECK((params[0].grad - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("uniform-logit cross-entropy equals ln C") {
  std::vector<Parameter> params;
  params.emplace_back("logits", Matrix::Zero(4, 7));
  auto ptrs = param_ptrs(params);
  const GraphFn graph = [](Tape& t, const std::vector<Var>& p) {
    return cross_entropy_mean(t, p[0], {0, 1, 2, 3});
  };
  CHECK(forward_value(graph, ptrs) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("catalog ops pass randomized finite-difference checks") {
  const int kTrials = 20;  // the acceptance suite runs the full 100

  check_op("affine", kTrials,
           [](Rng& rng) {
             std::vector<Parameter> p;
             p.emplace_back("x", random_matrix(rng, 3, 4));
             p.emplace_back("w", random_matrix(rng, 4, 5));
             p.emplace_back("b", random_matrix(rng, 1, 5));
             return p;
           },
           [](Rng&) -> GraphFn {
             return [](Tape& t, const std::vector<Var>& p) {
               return mean_all(t, affine(t, p[0], p[1], p[2]));
             };
           });

  check_op("embedding_lookup", kTrials,
           [](Rng& rng) {
             std::vector<Parameter> p;
             p.emplace_back("table", random_matrix(rng, 5, 3));
             return p;
           },
           [](Rng& rng) -> GraphFn {
             std::vector<int> rows;
             for (int i = 0; i < 6; ++i) rows.push_back(static_cast<int>(rng.below(5)));
             return [rows](Tape& t, const std::vector<Var>& p) {
               return mean_all(t, embedding_lookup(t, p[0], rows));
             };
           });

  check_op("layer_norm", kTrials,
           [](Rng& rng) {
             std::vector<Parameter> p;
             p.emplace_back("x", random_matrix(rng, 4, 6));
             p.emplace_back("gain", random_matrix(rng, 1, 6));
             p.emplace_back("shift", random_matrix(rng, 1, 6));
             return p;
           },
           [](Rng& rng) -> GraphFn {
             // weight the output so the gradient is not row-constant
             Matrix w = random_matrix(rng, 4, 6);
             return [w](Tape& t, const std::vector<Var>& p) {
               return mean_all(t, hadamard(t, layer_norm(t, p[0], p[1], p[2]), t.input(w)));
             };
           });

  check_op("attention", kTrials,
           [](Rng& rng) {
             std::vector<Parameter> p;
             p.emplace_back("q", random_matrix(rng, 7, 4));
             p.emplace_back("k", random_matrix(rng, 7, 4));
             p.emplace_back("v", random_matrix(rng, 7, 4));
             return p;
           },
           [](Rng& rng) -> GraphFn {
             Matrix w = random_matrix(rng, 7, 4);
             return [w](Tape& t, const std::vector<Var>& p) {
               const std::vector<Segment> segs{{0, 4}, {4, 3}};
               return mean_all(
                   t, hadamard(t, causal_self_attention(t, p[0], p[1], p[2], 2, segs), t.input(w)));
             };
           });

  check_op("gelu", kTrials,
           [](Rng& rng) {
             std::vector<Parameter> p;
             p.emplace_back("x", random_matrix(rng, 4, 5));
             return p;
           },
           [](Rng& rng) -> GraphFn {
             Matrix w = random_matrix(rng, 4, 5);
             return [w](Tape& t, const std::vector<Var>& p) {
               return mean_all(t, hadamard(t, gelu(t, p[0]), t.input(w)));
             };
           });

  check_op("softmax", kTrials,
           [](Rng& rng) {
             std::vector<Parameter> p;
             p.emplace_back("x", random_matrix(rng, 3, 6));
             return p;
           },
           [](Rng& rng) -> GraphFn {
             Matrix w = random_matrix(rng, 3, 6);
             return [w](Tape& t, const std::vector<Var>& p) {
               return mean_all(t, hadamard(t, softmax_rows(t, p[0]), t.input(w)));
             };
           });

  check_op("cross_entropy", kTrials,
           [](Rng& rng) {
             std::vector<Parameter> p;
             p.emplace_back("logits", random_matrix(rng, 5, 6));
             return p;
           },
           [](Rng& rng) -> GraphFn {
             std::vector<int> targets;
             for (int i = 0; i < 5; ++i) targets.push_back(static_cast<int>(rng.below(6)));
             return [targets](Tape& t, const std::vector<Var>& p) {
               return cross_entropy_mean(t, p[0], targets);
             };
           });

  check_op("mean_reduction", kTrials,
           [](Rng& rng) {
             std::vector<Parameter> p;
             p.emplace_back("x", random_matrix(rng, 4, 4));
             return p;
           },
           [](Rng&) -> GraphFn {
             return [](Tape& t, const std::vector<Var>& p) {
               return mean_all(t, hadamard(t, p[0], p[0]));
             };
           });
}

TEST_CASE("a corrupted gradient fails the finite-difference check") {
  Rng rng(5);
  std::vector<Parameter> params;
  params.emplace_back("x", random_matrix(rng, 3, 3));
  auto ptrs = param_ptrs(params);
  // scale(2w) pretending to be w: analytic grad is doubled
  const GraphFn wrong = [](Tape& t, const std::vector<Var>& p) {
    return scale(t, mean_all(t, hadamard(t, p[0], p[0])), 2.0);
  };
  const GraphFn right = [](Tape& t, const std::vector<Var>& p) {
    return mean_all(t, hadamard(t, p[0], p[0]));
  };
  // analytic grads from `wrong`, finite differences from `right`
  for (Parameter* p : ptrs) p->zero_grad();
  forward_backward(wrong, ptrs);
  const Matrix analytic = params[0].grad;
  params[0].zero_grad();
  const auto report = finite_diff_check(right, ptrs);
  CHECK(report.passed);  // sanity: the honest pair passes
  double max_rel = 0.0;
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) {
      const double fd = 2.0 * params[0].value(r, c) / 9.0;
      max_rel = std::max(max_rel, std::abs(analytic(r, c) - fd) / std::abs(fd));
    }
  CHECK(max_rel > 1e-4);  // the x2-corrupted gradient would fail
}

TEST_CASE("zero-parameter graph passes vacuously") {
  std::vector<Parameter> params;
  auto ptrs = param_ptrs(params);
  const GraphFn graph = [](Tape& t, const std::vector<Var>&) {
    return mean_all(t, t.input(Matrix::Ones(2, 2)));
  };
  const auto report = finite_diff_check(graph, ptrs);
  CHECK(report.passed);
  CHECK(report.entries.empty());
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(9);
  Tape t;
  const Var x = t.input(random_matrix(rng, 6, 9, 3.0));
  const Matrix p = t.value(softmax_rows(t, x));
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("causal attention gives near-zero weight to future positions") {
  Rng rng(10);
  Tape t;
  const Var q = t.input(random_matrix(rng, 5, 4));
  const Var k = t.input(random_matrix(rng, 5, 4));
  // probe the mask through the output: make V a one-hot indicator of position
  Matrix v_ind = Matrix::Zero(5, 4);
  v_ind(4, 0) = 1.0;  // only the last position carries signal in channel 0
  const Var v = t.input(v_ind);
  const Var out = causal_self_attention(t, q, k, v, 1, {{0, 5}});
  // rows 0..3 attend strictly to positions <= row, so channel 0 stays < 1e-30
  for (int r = 0; r < 4; ++r) CHECK(std::abs(t.value(out)(r, 0)) < 1e-30);
  CHECK(t.value(out)(4, 0) > 0.0);
}

TEST_CASE("cross-entropy is non-negative and decreases with the logit gap") {
  std::vector<double> losses;
  for (double gap : {1.0, 4.0, 16.0}) {
    Tape t;
    Matrix logits = Matrix::Zero(1, 5);
    logits(0, 2) = gap;
    const Var loss = cross_entropy_mean(t, t.input(logits), {2});
    CHECK(t.scalar(loss) >= 0.0);
    losses.push_back(t.scalar(loss));
  }
  CHECK(losses[0] > losses[1]);
  CHECK(losses[1] > losses[2]);
  CHECK(losses[2] < 1e-6);
}

TEST_CASE("non-finite outputs raise with the op name") {
  Tape t;
  Matrix big = Matrix::Constant(1, 2, 1e308);
  const Var x = t.input(big);
  try {
    (void)add(t, x, x);  // overflows to inf
    FAIL("expected NonFiniteValue");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::non_finite);
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
}

TEST_CASE("shape mismatches raise") {
  Tape t;
  const Var a = t.input(Matrix::Zero(2, 3));
  const Var b = t.input(Matrix::Zero(4, 2));
  CHECK_THROWS_AS((void)add(t, a, b), Error);
  CHECK_THROWS_AS((void)matmul(t, a, b), Error);
}

TEST_CASE("determinism: identical inputs give bit-identical losses") {
  for (int rep = 0; rep < 2; ++rep) {
    Rng rng(77);
    Tape t;
    const Var x = t.input(random_matrix(rng, 4, 4));
    const Var y = cross_entropy_mean(t, gelu(t, x), {0, 1, 2, 3});
    static double first = 0.0;
    if (rep == 0) first = t.scalar(y);
    else CHECK(first == t.scalar(y));
  }
}

TEST_SUITE_END();
