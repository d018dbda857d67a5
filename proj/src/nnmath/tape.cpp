#include <cmath>
#include <numbers>

#include "mfsf/nnmath.hpp"

namespace mfsf {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::DimensionMismatch,
          std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()));
}

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var target, const Matrix& delta) {
  if (!nodes_[target.id].requires_grad) return;
  grad(target.id) += delta;
}

void Tape::backward(Var output, const Matrix& output_grad, ParamStore& params) {
  if (nodes_.empty()) return;
  check_same_shape(value(output), output_grad, "backward seed");
  if (!nodes_[output.id].requires_grad) return;
  grad(output.id) += output_grad;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, params, i);
  }
}

void backward(Tape& tape, Var output, const Matrix& output_grad, ParamStore& params) {
  if (tape.empty()) return;
  tape.backward(output, output_grad, params);
}

namespace ops {

Var constant(Tape& t, Matrix value) { return t.push(std::move(value), false, nullptr); }

Var affine(Tape& t, Var x, const ParamStore& params, TensorSlot weight, TensorSlot bias) {
  const Matrix& xv = t.value(x);
  const auto w = params.value(weight);
  const auto b = params.value(bias);
  require(xv.cols() == w.rows(), ErrorKind::DimensionMismatch,
          "affine: input width " + std::to_string(xv.cols()) + " vs weight rows " +
              std::to_string(w.rows()));
  Matrix out = xv * w;
  out.rowwise() += b.row(0);
  const ParamStore* store = &params;
  return t.push(std::move(out), true, [x, weight, bias, store](Tape& tp, ParamStore& ps, std::size_t self) {
    const Matrix& g = tp.grad(self);
    ps.grad(weight).noalias() += tp.value(x).transpose() * g;
    ps.grad(bias) += g.colwise().sum();
    if (tp.requires_grad(x)) tp.grad(x.id).noalias() += g * store->value(weight).transpose();
  });
}

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  return t.push(t.value(a) + t.value(b), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tp, ParamStore&, std::size_t self) {
                  const Matrix g = tp.grad(self);
                  tp.accumulate(a, g);
                  tp.accumulate(b, g);
                });
}

Var sub(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "sub");
  return t.push(t.value(a) - t.value(b), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tp, ParamStore&, std::size_t self) {
                  const Matrix g = tp.grad(self);
                  tp.accumulate(a, g);
                  tp.accumulate(b, -g);
                });
}

Var mul(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "mul");
  return t.push(t.value(a).cwiseProduct(t.value(b)), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tp, ParamStore&, std::size_t self) {
                  const Matrix g = tp.grad(self);
                  if (tp.requires_grad(a)) tp.grad(a.id) += g.cwiseProduct(tp.value(b));
                  if (tp.requires_grad(b)) tp.grad(b.id) += g.cwiseProduct(tp.value(a));
                });
}

Var scale(Tape& t, Var a, double c) {
  return t.push(c * t.value(a), t.requires_grad(a),
                [a, c](Tape& tp, ParamStore&, std::size_t self) {
                  tp.grad(a.id) += c * tp.grad(self);
                });
}

Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a).array().tanh().matrix();
  return t.push(std::move(out), t.requires_grad(a), [a](Tape& tp, ParamStore&, std::size_t self) {
    const Matrix& y = tp.value(Var{self});
    tp.grad(a.id).array() += tp.grad(self).array() * (1.0 - y.array().square());
  });
}

Var relu(Tape& t, Var a) {
  Matrix out = t.value(a).cwiseMax(0.0);
  return t.push(std::move(out), t.requires_grad(a), [a](Tape& tp, ParamStore&, std::size_t self) {
    const Matrix& x = tp.value(a);
    tp.grad(a.id).array() += (x.array() > 0.0).select(tp.grad(self).array(), 0.0);
  });
}

Var exp(Tape& t, Var a) {
  Matrix out = t.value(a).array().exp().matrix();
  return t.push(std::move(out), t.requires_grad(a), [a](Tape& tp, ParamStore&, std::size_t self) {
    tp.grad(a.id).array() += tp.grad(self).array() * tp.value(Var{self}).array();
  });
}

Var log(Tape& t, Var a) {
  Matrix out = t.value(a).array().log().matrix();
  return t.push(std::move(out), t.requires_grad(a), [a](Tape& tp, ParamStore&, std::size_t self) {
    tp.grad(a.id).array() += tp.grad(self).array() / tp.value(a).array();
  });
}

Var soft_clamp(Tape& t, Var a, double c) {
  require(c > 0.0, ErrorKind::InvalidArgument, "soft_clamp: bound must be positive");
  Matrix th = (t.value(a).array() / c).tanh().matrix();
  Matrix out = c * th;
  return t.push(std::move(out), t.requires_grad(a),
                [a, c](Tape& tp, ParamStore&, std::size_t self) {
                  const auto th = tp.value(Var{self}).array() / c;
                  tp.grad(a.id).array() += tp.grad(self).array() * (1.0 - th.square());
                });
}

Var hard_clamp(Tape& t, Var a, double lo, double hi) {
  Matrix out = t.value(a).cwiseMax(lo).cwiseMin(hi);
  return t.push(std::move(out), t.requires_grad(a),
                [a, lo, hi](Tape& tp, ParamStore&, std::size_t self) {
                  const auto x = tp.value(a).array();
                  tp.grad(a.id).array() +=
                      (x >= lo && x <= hi).select(tp.grad(self).array(), 0.0);
                });
}

Var select_cols(Tape& t, Var a, std::vector<Index> cols) {
  const Matrix& av = t.value(a);
  Matrix out(av.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    require(cols[j] >= 0 && cols[j] < av.cols(), ErrorKind::DimensionMismatch,
            "select_cols: column " + std::to_string(cols[j]) + " out of range");
    out.col(static_cast<Index>(j)) = av.col(cols[j]);
  }
  return t.push(std::move(out), t.requires_grad(a),
                [a, cols = std::move(cols)](Tape& tp, ParamStore&, std::size_t self) {
                  const Matrix& g = tp.grad(self);
                  Matrix& ga = tp.grad(a.id);
                  for (std::size_t j = 0; j < cols.size(); ++j)
                    ga.col(cols[j]) += g.col(static_cast<Index>(j));
                });
}

Var slice_cols(Tape& t, Var a, Index start, Index count) {
  const Matrix& av = t.value(a);
  require(start >= 0 && count >= 0 && start + count <= av.cols(), ErrorKind::DimensionMismatch,
          "slice_cols: range out of bounds");
  Matrix out = av.middleCols(start, count);
  return t.push(std::move(out), t.requires_grad(a),
                [a, start, count](Tape& tp, ParamStore&, std::size_t self) {
                  tp.grad(a.id).middleCols(start, count) += tp.grad(self);
                });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.rows() == bv.rows(), ErrorKind::DimensionMismatch, "concat_cols: row count differs");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const Index na = av.cols();
  const Index nb = bv.cols();
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                [a, b, na, nb](Tape& tp, ParamStore&, std::size_t self) {
                  const Matrix g = tp.grad(self);
                  if (tp.requires_grad(a)) tp.grad(a.id) += g.leftCols(na);
                  if (tp.requires_grad(b)) tp.grad(b.id) += g.rightCols(nb);
                });
}

Var scatter_cols(Tape& t, Var a, std::vector<Index> a_cols, Var b, std::vector<Index> b_cols,
                 Index width) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.rows() == bv.rows(), ErrorKind::DimensionMismatch, "scatter_cols: row count differs");
  require(static_cast<Index>(a_cols.size()) == av.cols() &&
              static_cast<Index>(b_cols.size()) == bv.cols() &&
              static_cast<Index>(a_cols.size() + b_cols.size()) == width,
          ErrorKind::DimensionMismatch, "scatter_cols: index sets do not match widths");
  Matrix out(av.rows(), width);
  for (std::size_t j = 0; j < a_cols.size(); ++j) out.col(a_cols[j]) = av.col(static_cast<Index>(j));
  for (std::size_t j = 0; j < b_cols.size(); ++j) out.col(b_cols[j]) = bv.col(static_cast<Index>(j));
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                [a, b, a_cols = std::move(a_cols), b_cols = std::move(b_cols)](
                    Tape& tp, ParamStore&, std::size_t self) {
                  const Matrix g = tp.grad(self);
                  if (tp.requires_grad(a)) {
                    Matrix& ga = tp.grad(a.id);
                    for (std::size_t j = 0; j < a_cols.size(); ++j)
                      ga.col(static_cast<Index>(j)) += g.col(a_cols[j]);
                  }
                  if (tp.requires_grad(b)) {
                    Matrix& gb = tp.grad(b.id);
                    for (std::size_t j = 0; j < b_cols.size(); ++j)
                      gb.col(static_cast<Index>(j)) += g.col(b_cols[j]);
                  }
                });
}

Var row_sum(Tape& t, Var a) {
  Matrix out = t.value(a).rowwise().sum();
  return t.push(std::move(out), t.requires_grad(a), [a](Tape& tp, ParamStore&, std::size_t self) {
    tp.grad(a.id).colwise() += tp.grad(self).col(0);
  });
}

Var gaussian_logpdf(Tape& t, Var x, Var mean, Var log_std) {
  const Matrix& xv = t.value(x);
  check_same_shape(xv, t.value(mean), "gaussian_logpdf");
  check_same_shape(xv, t.value(log_std), "gaussian_logpdf");
  const Matrix inv_std = (-t.value(log_std).array()).exp().matrix();
  const Matrix r = (xv - t.value(mean)).cwiseProduct(inv_std);
  Matrix out = (-0.5 * r.array().square() - t.value(log_std).array() - kHalfLog2Pi)
                   .matrix()
                   .rowwise()
                   .sum();
  const bool rg = t.requires_grad(x) || t.requires_grad(mean) || t.requires_grad(log_std);
  return t.push(std::move(out), rg,
                [x, mean, log_std, r, inv_std](Tape& tp, ParamStore&, std::size_t self) {
                  const Vector g = tp.grad(self).col(0);
                  // d/dx = -r / sigma, d/dmean = r / sigma, d/dlog_std = r^2 - 1
                  const Matrix dmean = r.cwiseProduct(inv_std);
                  if (tp.requires_grad(x)) tp.grad(x.id) -= g.asDiagonal() * dmean;
                  if (tp.requires_grad(mean)) tp.grad(mean.id) += g.asDiagonal() * dmean;
                  if (tp.requires_grad(log_std))
                    tp.grad(log_std.id) +=
                        g.asDiagonal() * (r.array().square() - 1.0).matrix();
                });
}

Var std_normal_logpdf(Tape& t, Var x) {
  const Matrix& xv = t.value(x);
  Matrix out = (-0.5 * xv.array().square() - kHalfLog2Pi).matrix().rowwise().sum();
  return t.push(std::move(out), t.requires_grad(x), [x](Tape& tp, ParamStore&, std::size_t self) {
    const Vector g = tp.grad(self).col(0);
    tp.grad(x.id) -= g.asDiagonal() * tp.value(x);
  });
}

}  // namespace ops

double gaussian_logpdf(std::span<const double> x, std::span<const double> mean,
                       std::span<const double> log_std) {
  require(x.size() == mean.size() && x.size() == log_std.size(), ErrorKind::DimensionMismatch,
          "gaussian_logpdf: lengths " + std::to_string(x.size()) + ", " +
              std::to_string(mean.size()) + ", " + std::to_string(log_std.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = (x[i] - mean[i]) * std::exp(-log_std[i]);
    s += -kHalfLog2Pi - log_std[i] - 0.5 * r * r;
  }
  return s;
}

}  // namespace mfsf
