#pragma once

// Minimal reverse-mode tape over Matrix values. Ops evaluate eagerly and
// record a closure that scatters the output gradient into the inputs. Nodes
// are append-only, so reverse creation order is a valid topological order.
// The op set is exactly what the ladder forward/decode/cost graphs need.

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lid/matrix.hpp"

namespace lid::ad {

class Tape;

struct Ref {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Ref constant(Matrix v) { return push(std::move(v), false, nullptr); }

  // Gradient sink: parameters and any input we differentiate with respect to.
  Ref leaf(const Matrix& v) { return push(v, true, nullptr); }

  const Matrix& value(Ref r) const { return nodes_[r.id].value; }
  const Matrix& grad(Ref r) const { return nodes_[r.id].grad; }
  bool needs_grad(Ref r) const { return nodes_[r.id].needs; }

  // ---- elementwise binary ----

  Ref add(Ref a, Ref b) {
    const Matrix &A = value(a), &B = value(b);
    check_same_shape(A, B, "add");
    Matrix out = A;
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] += B.data()[i];
    return push(std::move(out), needs_grad(a) || needs_grad(b),
                [a, b](Tape& t, const Matrix& g) {
                  t.accumulate(a, g);
                  t.accumulate(b, g);
                });
  }

  Ref sub(Ref a, Ref b) {
    const Matrix &A = value(a), &B = value(b);
    check_same_shape(A, B, "sub");
    Matrix out = A;
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] -= B.data()[i];
    return push(std::move(out), needs_grad(a) || needs_grad(b),
                [a, b](Tape& t, const Matrix& g) {
                  t.accumulate(a, g);
                  if (t.needs_grad(b)) {
                    Matrix& gb = t.grad_mut(b);
                    for (size_t i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
                  }
                });
  }

  Ref mul(Ref a, Ref b) {
    const Matrix &A = value(a), &B = value(b);
    check_same_shape(A, B, "mul");
    Matrix out = A;
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] *= B.data()[i];
    return push(std::move(out), needs_grad(a) || needs_grad(b),
                [a, b](Tape& t, const Matrix& g) {
                  if (t.needs_grad(a)) {
                    Matrix& ga = t.grad_mut(a);
                    const Matrix& B2 = t.value(b);
                    for (size_t i = 0; i < g.size(); ++i)
                      ga.data()[i] += g.data()[i] * B2.data()[i];
                  }
                  if (t.needs_grad(b)) {
                    Matrix& gb = t.grad_mut(b);
                    const Matrix& A2 = t.value(a);
                    for (size_t i = 0; i < g.size(); ++i)
                      gb.data()[i] += g.data()[i] * A2.data()[i];
                  }
                });
  }

  // ---- row-vector broadcasts (v is 1 x cols) ----

  Ref add_row(Ref a, Ref v) { return row_broadcast(a, v, +1); }
  Ref sub_row(Ref a, Ref v) { return row_broadcast(a, v, -1); }

  Ref mul_row(Ref a, Ref v) {
    const Matrix &A = value(a), &V = value(v);
    check_row_vec(A, V, "mul_row");
    Matrix out = A;
    for (size_t i = 0; i < A.rows(); ++i)
      for (size_t j = 0; j < A.cols(); ++j) out(i, j) *= V(0, j);
    return push(std::move(out), needs_grad(a) || needs_grad(v),
                [a, v](Tape& t, const Matrix& g) {
                  if (t.needs_grad(a)) {
                    Matrix& ga = t.grad_mut(a);
                    const Matrix& V2 = t.value(v);
                    for (size_t i = 0; i < g.rows(); ++i)
                      for (size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * V2(0, j);
                  }
                  if (t.needs_grad(v)) {
                    Matrix& gv = t.grad_mut(v);
                    const Matrix& A2 = t.value(a);
                    for (size_t i = 0; i < g.rows(); ++i)
                      for (size_t j = 0; j < g.cols(); ++j) gv(0, j) += g(i, j) * A2(i, j);
                  }
                });
  }

  // ---- reductions ----

  Ref col_mean(Ref a) {
    const Matrix& A = value(a);
    if (A.rows() == 0) throw std::invalid_argument("col_mean: zero rows");
    Matrix out(1, A.cols());
    for (size_t i = 0; i < A.rows(); ++i)
      for (size_t j = 0; j < A.cols(); ++j) out(0, j) += A(i, j);
    for (size_t j = 0; j < A.cols(); ++j) out(0, j) /= static_cast<double>(A.rows());
    return push(std::move(out), needs_grad(a), [a](Tape& t, const Matrix& g) {
      if (!t.needs_grad(a)) return;
      Matrix& ga = t.grad_mut(a);
      const double inv = 1.0 / static_cast<double>(ga.rows());
      for (size_t i = 0; i < ga.rows(); ++i)
        for (size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(0, j) * inv;
    });
  }

  Ref sum_all(Ref a) {
    const Matrix& A = value(a);
    Matrix out(1, 1);
    for (size_t i = 0; i < A.size(); ++i) out(0, 0) += A.data()[i];
    return push(std::move(out), needs_grad(a), [a](Tape& t, const Matrix& g) {
      if (!t.needs_grad(a)) return;
      Matrix& ga = t.grad_mut(a);
      for (size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g(0, 0);
    });
  }

  // ---- unary ----

  Ref relu(Ref a) {
    Matrix out = value(a);
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(0.0, out.data()[i]);
    return push(std::move(out), needs_grad(a), [a](Tape& t, const Matrix& g) {
      if (!t.needs_grad(a)) return;
      Matrix& ga = t.grad_mut(a);
      const Matrix& A = t.value(a);
      for (size_t i = 0; i < g.size(); ++i)
        if (A.data()[i] > 0) ga.data()[i] += g.data()[i];
    });
  }

  Ref sigmoid(Ref a) {
    Matrix out = value(a);
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-out.data()[i]));
    Ref r = push(std::move(out), needs_grad(a), nullptr);
    nodes_[r.id].backward = [a, r](Tape& t, const Matrix& g) {
      if (!t.needs_grad(a)) return;
      Matrix& ga = t.grad_mut(a);
      const Matrix& S = t.value(r);
      for (size_t i = 0; i < g.size(); ++i) {
        double s = S.data()[i];
        ga.data()[i] += g.data()[i] * s * (1.0 - s);
      }
    };
    return r;
  }

  Ref softmax(Ref a) {
    Ref r = push(softmax_rows(value(a)), needs_grad(a), nullptr);
    nodes_[r.id].backward = [a, r](Tape& t, const Matrix& g) {
      if (!t.needs_grad(a)) return;
      Matrix& ga = t.grad_mut(a);
      const Matrix& Y = t.value(r);
      for (size_t i = 0; i < g.rows(); ++i) {
        double dot = 0;
        for (size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * Y(i, j);
        for (size_t j = 0; j < g.cols(); ++j) ga(i, j) += Y(i, j) * (g(i, j) - dot);
      }
    };
    return r;
  }

  // log with the kLogFloor clamp; gradient is zero in the clamped region.
  Ref logc(Ref a) {
    Matrix out = value(a);
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] = std::log(std::max(out.data()[i], kLogFloor));
    return push(std::move(out), needs_grad(a), [a](Tape& t, const Matrix& g) {
      if (!t.needs_grad(a)) return;
      Matrix& ga = t.grad_mut(a);
      const Matrix& A = t.value(a);
      for (size_t i = 0; i < g.size(); ++i)
        if (A.data()[i] > kLogFloor) ga.data()[i] += g.data()[i] / A.data()[i];
    });
  }

  // 1 / sqrt(x + eps), the stddev-forming step of batch normalization.
  Ref rsqrt_eps(Ref a, double eps) {
    Matrix out = value(a);
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] = 1.0 / std::sqrt(out.data()[i] + eps);
    Ref r = push(std::move(out), needs_grad(a), nullptr);
    nodes_[r.id].backward = [a, r](Tape& t, const Matrix& g) {
      if (!t.needs_grad(a)) return;
      Matrix& ga = t.grad_mut(a);
      const Matrix& Y = t.value(r);
      for (size_t i = 0; i < g.size(); ++i) {
        double y = Y.data()[i];
        ga.data()[i] += g.data()[i] * (-0.5 * y * y * y);
      }
    };
    return r;
  }

  Ref scale(Ref a, double c) {
    Matrix out = value(a);
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
    return push(std::move(out), needs_grad(a), [a, c](Tape& t, const Matrix& g) {
      if (!t.needs_grad(a)) return;
      Matrix& ga = t.grad_mut(a);
      for (size_t i = 0; i < g.size(); ++i) ga.data()[i] += c * g.data()[i];
    });
  }

  // ---- structure ----

  Ref matmul(Ref a, Ref b) {
    Matrix out = lid::matmul(value(a), value(b));
    return push(std::move(out), needs_grad(a) || needs_grad(b),
                [a, b](Tape& t, const Matrix& g) {
                  if (t.needs_grad(a)) {
                    Matrix da = lid::matmul(g, transpose(t.value(b)));
                    Matrix& ga = t.grad_mut(a);
                    for (size_t i = 0; i < da.size(); ++i) ga.data()[i] += da.data()[i];
                  }
                  if (t.needs_grad(b)) {
                    Matrix db = lid::matmul(transpose(t.value(a)), g);
                    Matrix& gb = t.grad_mut(b);
                    for (size_t i = 0; i < db.size(); ++i) gb.data()[i] += db.data()[i];
                  }
                });
  }

  Ref row_slice(Ref a, size_t r0, size_t r1) {
    const Matrix& A = value(a);
    if (r1 < r0 || r1 > A.rows()) throw std::invalid_argument("row_slice: bad range");
    Matrix out(r1 - r0, A.cols());
    for (size_t i = r0; i < r1; ++i)
      for (size_t j = 0; j < A.cols(); ++j) out(i - r0, j) = A(i, j);
    return push(std::move(out), needs_grad(a), [a, r0](Tape& t, const Matrix& g) {
      if (!t.needs_grad(a)) return;
      Matrix& ga = t.grad_mut(a);
      for (size_t i = 0; i < g.rows(); ++i)
        for (size_t j = 0; j < g.cols(); ++j) ga(r0 + i, j) += g(i, j);
    });
  }

  Ref row(Ref a, size_t i) { return row_slice(a, i, i + 1); }

  // out(i, 0) = a(i, idx[i]); picks the labeled class probability per row.
  Ref gather_cols(Ref a, std::vector<size_t> idx) {
    const Matrix& A = value(a);
    if (idx.size() != A.rows()) throw std::invalid_argument("gather_cols: index count");
    Matrix out(A.rows(), 1);
    for (size_t i = 0; i < A.rows(); ++i) out(i, 0) = A(i, idx[i]);
    return push(std::move(out), needs_grad(a),
                [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
                  if (!t.needs_grad(a)) return;
                  Matrix& ga = t.grad_mut(a);
                  for (size_t i = 0; i < g.rows(); ++i) ga(i, idx[i]) += g(i, 0);
                });
  }

  // Seeds the scalar output with gradient 1 and replays the tape in reverse.
  void backward(Ref out) {
    const Matrix& o = value(out);
    if (o.rows() != 1 || o.cols() != 1)
      throw std::invalid_argument("backward: output must be 1x1, got " + o.shape_str());
    if (!needs_grad(out)) return;  // constant objective: all leaf grads stay zero
    nodes_[out.id].grad(0, 0) = 1.0;
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.needs && n.backward) n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs = false;
    std::function<void(Tape&, const Matrix&)> backward;
  };

  Matrix& grad_mut(Ref r) { return nodes_[r.id].grad; }

  void accumulate(Ref r, const Matrix& g) {
    if (!needs_grad(r)) return;
    Matrix& dst = grad_mut(r);
    for (size_t i = 0; i < g.size(); ++i) dst.data()[i] += g.data()[i];
  }

  Ref row_broadcast(Ref a, Ref v, int sign) {
    const Matrix &A = value(a), &V = value(v);
    check_row_vec(A, V, sign > 0 ? "add_row" : "sub_row");
    Matrix out = A;
    for (size_t i = 0; i < A.rows(); ++i)
      for (size_t j = 0; j < A.cols(); ++j) out(i, j) += sign * V(0, j);
    return push(std::move(out), needs_grad(a) || needs_grad(v),
                [a, v, sign](Tape& t, const Matrix& g) {
                  t.accumulate(a, g);
                  if (t.needs_grad(v)) {
                    Matrix& gv = t.grad_mut(v);
                    for (size_t i = 0; i < g.rows(); ++i)
                      for (size_t j = 0; j < g.cols(); ++j) gv(0, j) += sign * g(i, j);
                  }
                });
  }

  static void check_row_vec(const Matrix& a, const Matrix& v, const char* op) {
    if (v.rows() != 1 || v.cols() != a.cols())
      throw std::invalid_argument(std::string(op) + ": want 1x" + std::to_string(a.cols()) +
                                  " row vector, got " + v.shape_str());
  }

  Ref push(Matrix v, bool needs, std::function<void(Tape&, const Matrix&)> back) {
    Node n;
    if (needs) n.grad = Matrix(v.rows(), v.cols());
    n.value = std::move(v);
    n.needs = needs;
    n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return Ref{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace lid::ad
