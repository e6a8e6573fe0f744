#include "ilm/autodiff.hpp"

#include <cmath>
#include <utility>

#include "ilm/errors.hpp"

namespace ilm {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_finite(const Matrix& m, const char* op_name) {
  if (!m.allFinite()) fail(Errc::non_finite, std::string("output of ") + op_name);
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op_name) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(Errc::shape_mismatch, std::string(op_name) + ": " + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                   std::to_string(b.cols()));
}

Matrix softmax_rows_value(const Matrix& x) {
  Matrix p(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    p.row(r) = (x.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

bool any_grad(Tape& t, std::initializer_list<Var> args) {
  for (Var a : args)
    if (t.requires_grad(a)) return true;
  return false;
}

}  // namespace

Var Tape::input(Matrix value, bool requires_grad) {
  check_finite(value, "input");
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) fail(Errc::shape_mismatch, "scalar() on non-1x1 value");
  return m(0, 0);
}

Var Tape::emit(Matrix value, bool requires_grad, std::function<void(Tape&)> back, const char* op_name) {
  check_finite(value, op_name);
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  const Matrix& l = value(loss);
  if (l.rows() != 1 || l.cols() != 1) fail(Errc::shape_mismatch, "backward() needs a 1x1 loss");
  if (!requires_grad(loss)) return;  // no parameter feeds the loss
  for (auto& n : nodes_)
    if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  grad(loss)(0, 0) = 1.0;
  for (int i = loss.index; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.back) n.back(*this);
  }
}

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows())
    fail(Errc::shape_mismatch, "matmul: inner dims " + std::to_string(A.cols()) + " vs " +
                                   std::to_string(B.rows()));
  const bool rg = any_grad(t, {a, b});
  const Var out{t.size()};
  return t.emit(A * B, rg,
                rg ? std::function<void(Tape&)>([a, b, out](Tape& tt) {
                  const Matrix& g = tt.grad(out);
                  if (tt.requires_grad(a)) tt.grad(a).noalias() += g * tt.value(b).transpose();
                  if (tt.requires_grad(b)) tt.grad(b).noalias() += tt.value(a).transpose() * g;
                })
                   : nullptr,
                "matmul");
}

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  const bool rg = any_grad(t, {a, b});
  const Var out{t.size()};
  return t.emit(t.value(a) + t.value(b), rg,
                rg ? std::function<void(Tape&)>([a, b, out](Tape& tt) {
                  const Matrix& g = tt.grad(out);
                  if (tt.requires_grad(a)) tt.grad(a) += g;
                  if (tt.requires_grad(b)) tt.grad(b) += g;
                })
                   : nullptr,
                "add");
}

Var add_rowvec(Tape& t, Var x, Var row) {
  const Matrix& X = t.value(x);
  const Matrix& R = t.value(row);
  if (R.rows() != 1 || R.cols() != X.cols()) fail(Errc::shape_mismatch, "add_rowvec: bias is not 1xC");
  const bool rg = any_grad(t, {x, row});
  const Var out{t.size()};
  Matrix val = X.rowwise() + R.row(0);
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([x, row, out](Tape& tt) {
                  const Matrix& g = tt.grad(out);
                  if (tt.requires_grad(x)) tt.grad(x) += g;
                  if (tt.requires_grad(row)) tt.grad(row).row(0) += g.colwise().sum();
                })
                   : nullptr,
                "add_rowvec");
}

Var affine(Tape& t, Var x, Var w, Var b) { return add_rowvec(t, matmul(t, x, w), b); }

Var embedding_lookup(Tape& t, Var table, std::vector<int> rows) {
  const Matrix& T = t.value(table);
  Matrix out(static_cast<Eigen::Index>(rows.size()), T.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= T.rows())
      fail(Errc::index_out_of_range, "embedding_lookup row " + std::to_string(rows[i]));
    out.row(static_cast<Eigen::Index>(i)) = T.row(rows[i]);
  }
  const bool rg = t.requires_grad(table);
  const Var ov{t.size()};
  return t.emit(std::move(out), rg,
                rg ? std::function<void(Tape&)>([table, ov, rows = std::move(rows)](Tape& tt) {
                  const Matrix& g = tt.grad(ov);
                  Matrix& gt = tt.grad(table);
                  for (std::size_t i = 0; i < rows.size(); ++i)
                    gt.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
                })
                   : nullptr,
                "embedding_lookup");
}

Var layer_norm(Tape& t, Var x, Var gain, Var shift, double eps) {
  const Matrix& X = t.value(x);
  const Matrix& G = t.value(gain);
  const Matrix& S = t.value(shift);
  if (G.rows() != 1 || G.cols() != X.cols() || S.rows() != 1 || S.cols() != X.cols())
    fail(Errc::shape_mismatch, "layer_norm: gain/shift must be 1xC");
  const auto n = X.cols();
  Matrix xhat(X.rows(), n);
  Vector inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mean = X.row(r).mean();
    const double var = (X.row(r).array() - mean).square().sum() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mean) * inv_std(r);
  }
  Matrix val = (xhat.array().rowwise() * G.row(0).array()).rowwise() + S.row(0).array();
  const bool rg = any_grad(t, {x, gain, shift});
  const Var out{t.size()};
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([x, gain, shift, out, xhat = std::move(xhat),
                                                 inv_std = std::move(inv_std)](Tape& tt) {
                  const Matrix& g = tt.grad(out);
                  const Matrix& G = tt.value(gain);
                  if (tt.requires_grad(gain))
                    tt.grad(gain).row(0) += (g.array() * xhat.array()).colwise().sum().matrix();
                  if (tt.requires_grad(shift)) tt.grad(shift).row(0) += g.colwise().sum();
                  if (tt.requires_grad(x)) {
                    const auto n = static_cast<double>(g.cols());
                    Matrix dxhat = g.array().rowwise() * G.row(0).array();
                    Matrix& gx = tt.grad(x);
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      const double m1 = dxhat.row(r).sum() / n;
                      const double m2 = (dxhat.row(r).array() * xhat.row(r).array()).sum() / n;
                      gx.row(r).array() +=
                          inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                    }
                  }
                })
                   : nullptr,
                "layer_norm");
}

Var gelu(Tape& t, Var x) {
  const Matrix& X = t.value(x);
  Matrix val = X.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([x, out](Tape& tt) {
                  const Matrix& X = tt.value(x);
                  const Matrix& g = tt.grad(out);
                  tt.grad(x).array() += g.array() * X.unaryExpr([](double v) {
                                                      const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                                                      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                                                      return phi + v * pdf;
                                                    }).array();
                })
                   : nullptr,
                "gelu");
}

Var relu(Tape& t, Var x) {
  const Matrix& X = t.value(x);
  Matrix val = X.cwiseMax(0.0);
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([x, out](Tape& tt) {
                  const Matrix& X = tt.value(x);
                  const Matrix& g = tt.grad(out);
                  tt.grad(x).array() += g.array() * (X.array() > 0.0).cast<double>();
                })
                   : nullptr,
                "relu");
}

Var softmax_rows(Tape& t, Var x) {
  Matrix p = softmax_rows_value(t.value(x));
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(std::move(p), rg,
                rg ? std::function<void(Tape&)>([x, out](Tape& tt) {
                  const Matrix& y = tt.value(out);
                  const Matrix& g = tt.grad(out);
                  Matrix gy = g.array() * y.array();
                  Vector row_dot = gy.rowwise().sum();
                  tt.grad(x) += gy - (y.array().colwise() * row_dot.array()).matrix();
                })
                   : nullptr,
                "softmax_rows");
}

Var log_softmax_rows(Tape& t, Var x) {
  const Matrix& X = t.value(x);
  Matrix lp(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mx = X.row(r).maxCoeff();
    const double lse = mx + std::log((X.row(r).array() - mx).exp().sum());
    lp.row(r) = X.row(r).array() - lse;
  }
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(std::move(lp), rg,
                rg ? std::function<void(Tape&)>([x, out](Tape& tt) {
                  const Matrix& lp = tt.value(out);
                  const Matrix& g = tt.grad(out);
                  Vector row_sum = g.rowwise().sum();
                  tt.grad(x) += g - (lp.array().exp().colwise() * row_sum.array()).matrix();
                })
                   : nullptr,
                "log_softmax_rows");
}

Var causal_self_attention(Tape& t, Var q, Var k, Var v, int num_heads, std::vector<Segment> segments) {
  const Matrix& Q = t.value(q);
  const Matrix& K = t.value(k);
  const Matrix& V = t.value(v);
  check_same_shape(Q, K, "causal_self_attention");
  check_same_shape(Q, V, "causal_self_attention");
  const int dim = static_cast<int>(Q.cols());
  if (num_heads <= 0 || dim % num_heads != 0)
    fail(Errc::shape_mismatch, "causal_self_attention: dim not divisible by heads");
  const int head_dim = dim / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Matrix out = Matrix::Zero(Q.rows(), dim);
  // Attention weights are kept for the backward pass, one per (segment, head).
  std::vector<Matrix> weights;
  weights.reserve(segments.size() * static_cast<std::size_t>(num_heads));
  for (const Segment& s : segments) {
    for (int h = 0; h < num_heads; ++h) {
      const int c = h * head_dim;
      auto Qh = Q.block(s.offset, c, s.len, head_dim);
      auto Kh = K.block(s.offset, c, s.len, head_dim);
      auto Vh = V.block(s.offset, c, s.len, head_dim);
      Matrix scores = (Qh * Kh.transpose()) * scale;
      for (Eigen::Index i = 0; i < scores.rows(); ++i)
        for (Eigen::Index j = i + 1; j < scores.cols(); ++j) scores(i, j) += kCausalMaskValue;
      Matrix attn = softmax_rows_value(scores);
      out.block(s.offset, c, s.len, head_dim).noalias() = attn * Vh;
      weights.push_back(std::move(attn));
    }
  }

  const bool rg = any_grad(t, {q, k, v});
  const Var ov{t.size()};
  return t.emit(
      std::move(out), rg,
      rg ? std::function<void(Tape&)>([q, k, v, ov, num_heads, head_dim, scale,
                                       segments = std::move(segments),
                                       weights = std::move(weights)](Tape& tt) {
        const Matrix& g = tt.grad(ov);
        const Matrix& Q = tt.value(q);
        const Matrix& K = tt.value(k);
        const Matrix& V = tt.value(v);
        std::size_t widx = 0;
        for (const Segment& s : segments) {
          for (int h = 0; h < num_heads; ++h) {
            const int c = h * head_dim;
            const Matrix& attn = weights[widx++];
            auto Qh = Q.block(s.offset, c, s.len, head_dim);
            auto Kh = K.block(s.offset, c, s.len, head_dim);
            auto Vh = V.block(s.offset, c, s.len, head_dim);
            auto gh = g.block(s.offset, c, s.len, head_dim);
            Matrix d_attn = gh * Vh.transpose();
            Vector row_dot = (d_attn.array() * attn.array()).rowwise().sum();
            Matrix d_scores =
                (attn.array() * (d_attn.array().colwise() - row_dot.array())).matrix() * scale;
            if (tt.requires_grad(v))
              tt.grad(v).block(s.offset, c, s.len, head_dim).noalias() += attn.transpose() * gh;
            if (tt.requires_grad(q))
              tt.grad(q).block(s.offset, c, s.len, head_dim).noalias() += d_scores * Kh;
            if (tt.requires_grad(k))
              tt.grad(k).block(s.offset, c, s.len, head_dim).noalias() += d_scores.transpose() * Qh;
          }
        }
      })
         : nullptr,
      "causal_self_attention");
}

Var cross_entropy_mean(Tape& t, Var logits, std::vector<int> targets) {
  const Matrix& L = t.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != L.rows())
    fail(Errc::shape_mismatch, "cross_entropy_mean: one target per row required");
  if (targets.empty()) fail(Errc::empty_batch, "cross_entropy_mean on zero rows");
  double total = 0.0;
  for (Eigen::Index r = 0; r < L.rows(); ++r) {
    const int tgt = targets[static_cast<std::size_t>(r)];
    if (tgt < 0 || tgt >= L.cols()) fail(Errc::index_out_of_range, "cross_entropy target");
    const double mx = L.row(r).maxCoeff();
    const double lse = mx + std::log((L.row(r).array() - mx).exp().sum());
    total += lse - L(r, tgt);
  }
  Matrix val(1, 1);
  val(0, 0) = total / static_cast<double>(L.rows());
  const bool rg = t.requires_grad(logits);
  const Var out{t.size()};
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([logits, out, targets = std::move(targets)](Tape& tt) {
                  const double g = tt.grad(out)(0, 0);
                  const Matrix& L = tt.value(logits);
                  const double inv_n = 1.0 / static_cast<double>(L.rows());
                  Matrix p = softmax_rows_value(L);
                  for (Eigen::Index r = 0; r < L.rows(); ++r)
                    p(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
                  tt.grad(logits) += (g * inv_n) * p;
                })
                   : nullptr,
                "cross_entropy_mean");
}

Var mean_all(Tape& t, Var x) {
  const Matrix& X = t.value(x);
  Matrix val(1, 1);
  val(0, 0) = X.mean();
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([x, out](Tape& tt) {
                  const Matrix& X = tt.value(x);
                  const double g = tt.grad(out)(0, 0) / static_cast<double>(X.size());
                  tt.grad(x).array() += g;
                })
                   : nullptr,
                "mean_all");
}

Var sum_all(Tape& t, Var x) {
  const Matrix& X = t.value(x);
  Matrix val(1, 1);
  val(0, 0) = X.sum();
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([x, out](Tape& tt) {
                  tt.grad(x).array() += tt.grad(out)(0, 0);
                })
                   : nullptr,
                "sum_all");
}

Var hadamard(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "hadamard");
  const bool rg = any_grad(t, {a, b});
  const Var out{t.size()};
  return t.emit(t.value(a).cwiseProduct(t.value(b)), rg,
                rg ? std::function<void(Tape&)>([a, b, out](Tape& tt) {
                  const Matrix& g = tt.grad(out);
                  if (tt.requires_grad(a)) tt.grad(a).array() += g.array() * tt.value(b).array();
                  if (tt.requires_grad(b)) tt.grad(b).array() += g.array() * tt.value(a).array();
                })
                   : nullptr,
                "hadamard");
}

Var exp_elem(Tape& t, Var x) {
  Matrix val = t.value(x).array().exp();
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([x, out](Tape& tt) {
                  tt.grad(x).array() += tt.grad(out).array() * tt.value(out).array();
                })
                   : nullptr,
                "exp_elem");
}

Var scale(Tape& t, Var x, double c) {
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(t.value(x) * c, rg,
                rg ? std::function<void(Tape&)>([x, out, c](Tape& tt) {
                  tt.grad(x) += c * tt.grad(out);
                })
                   : nullptr,
                "scale");
}

Var transpose(Tape& t, Var x) {
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(t.value(x).transpose(), rg,
                rg ? std::function<void(Tape&)>([x, out](Tape& tt) {
                  tt.grad(x) += tt.grad(out).transpose();
                })
                   : nullptr,
                "transpose");
}

Var slice_cols(Tape& t, Var x, int begin, int len) {
  const Matrix& X = t.value(x);
  if (begin < 0 || len < 0 || begin + len > X.cols())
    fail(Errc::index_out_of_range, "slice_cols out of range");
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(X.middleCols(begin, len), rg,
                rg ? std::function<void(Tape&)>([x, out, begin, len](Tape& tt) {
                  tt.grad(x).middleCols(begin, len) += tt.grad(out);
                })
                   : nullptr,
                "slice_cols");
}

Var gather_cols(Tape& t, Var x, std::vector<int> cols) {
  const Matrix& X = t.value(x);
  Matrix val(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= X.cols()) fail(Errc::index_out_of_range, "gather_cols");
    val.col(static_cast<Eigen::Index>(i)) = X.col(cols[i]);
  }
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([x, out, cols = std::move(cols)](Tape& tt) {
                  const Matrix& g = tt.grad(out);
                  for (std::size_t i = 0; i < cols.size(); ++i)
                    tt.grad(x).col(cols[i]) += g.col(static_cast<Eigen::Index>(i));
                })
                   : nullptr,
                "gather_cols");
}

Var dropout(Tape& t, Var x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) fail(Errc::invalid_config, "dropout rate outside [0,1)");
  const Matrix& X = t.value(x);
  Matrix mask(X.rows(), X.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      mask(r, c) = (rng.uniform01() >= rate) ? keep_scale : 0.0;
  const bool rg = t.requires_grad(x);
  const Var out{t.size()};
  Matrix val = X.cwiseProduct(mask);  // before the closure moves the mask
  return t.emit(std::move(val), rg,
                rg ? std::function<void(Tape&)>([x, out, mask = std::move(mask)](Tape& tt) {
                  tt.grad(x).array() += tt.grad(out).array() * mask.array();
                })
                   : nullptr,
                "dropout");
}

}  // namespace ilm
