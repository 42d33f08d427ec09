#include "lgse/tensor.hpp"

#include <cmath>
#include <sstream>

namespace lgse {

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

namespace {

void require_same_shape(const char* op, const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
}

void require_scalar(const char* op, const Mat& s) {
  if (s.rows() != 1 || s.cols() != 1)
    throw DimensionError(std::string(op) + ": expected 1x1 operand, got " + shape_str(s));
}

}  // namespace

const Mat& Var::value() const { return tape_->value(id_); }
const Mat& Var::grad() const { return tape_->grad(id_); }
double Var::scalar() const {
  require_scalar("scalar", value());
  return value()(0, 0);
}

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  const bool needs = record_grad_ && p.trainable;
  nodes_.push_back(Node{p.value, Mat(), nullptr, needs ? &p : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Mat value, std::initializer_list<Var> parents, Backprop fn) {
  bool needs = false;
  for (const Var& p : parents) needs = needs || nodes_[p.id()].needs_grad;
  nodes_.push_back(Node{std::move(value), Mat(), needs ? std::move(fn) : Backprop{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Mat value, const std::vector<Var>& parents, Backprop fn) {
  bool needs = false;
  for (const Var& p : parents) needs = needs || nodes_[p.id()].needs_grad;
  nodes_.push_back(Node{std::move(value), Mat(), needs ? std::move(fn) : Backprop{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

const Mat& Tape::grad(std::size_t id) const {
  static const Mat empty;
  return nodes_[id].grad.size() ? nodes_[id].grad : empty;
}

void Tape::accumulate(std::size_t id, const Mat& g) { accumulate_expr(id, g); }

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
  Node& root = nodes_[loss.id()];
  if (root.value.rows() != 1 || root.value.cols() != 1)
    throw ContractError("backward: loss must be scalar, got " + shape_str(root.value));
  if (!root.needs_grad) return;
  root.grad = Mat::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backprop) n.backprop(*this, i);
    if (n.param) n.param->grad += n.grad;
  }
}

// ---- linear algebra ---------------------------------------------------------

Var matmul(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.cols() != B.rows())
    throw DimensionError("matmul: inner dimensions differ " + shape_str(A) + " * " + shape_str(B));
  Tape& t = *a.tape();
  return t.record(A * B, {a, b}, [a, b](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(a.id())) t.accumulate_expr(a.id(), g * b.value().transpose());
    if (t.needs_grad(b.id())) t.accumulate_expr(b.id(), a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.cols() != B.cols())
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_str(A) + " * " +
                         shape_str(B) + "^T");
  Tape& t = *a.tape();
  return t.record(A * B.transpose(), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(a.id())) t.accumulate_expr(a.id(), g * b.value());
    if (t.needs_grad(b.id())) t.accumulate_expr(b.id(), g.transpose() * a.value());
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.record(a.value().transpose(), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate_expr(a.id(), t.grad(self).transpose());
  });
}

// ---- elementwise ------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tape& t = *a.tape();
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self));
    t.accumulate(b.id(), t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Tape& t = *a.tape();
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self));
    t.accumulate_expr(b.id(), -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  Tape& t = *a.tape();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    t.accumulate_expr(a.id(), g.cwiseProduct(b.value()));
    t.accumulate_expr(b.id(), g.cwiseProduct(a.value()));
  });
}

Var div(Var a, Var b) {
  require_same_shape("div", a.value(), b.value());
  Tape& t = *a.tape();
  Mat out = a.value().cwiseQuotient(b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& B = b.value();
    t.accumulate_expr(a.id(), g.cwiseQuotient(B));
    if (t.needs_grad(b.id())) {
      Mat gb = -g.cwiseProduct(t.value(self)).cwiseQuotient(B);
      t.accumulate(b.id(), gb);
    }
  });
}

Var add_row(Var a, Var row) {
  const Mat& A = a.value();
  const Mat& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols())
    throw DimensionError("add_row: row " + shape_str(R) + " does not match " + shape_str(A));
  Tape& t = *a.tape();
  Mat out = A.rowwise() + R.row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    t.accumulate(a.id(), g);
    t.accumulate_expr(row.id(), g.colwise().sum());
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.record(a.value() * s, {a}, [a, s](Tape& t, std::size_t self) {
    t.accumulate_expr(a.id(), t.grad(self) * s);
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape();
  Mat out = a.value().array() + s;
  return t.record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self));
  });
}

Var mul_by(Var a, Var s) {
  require_scalar("mul_by", s.value());
  Tape& t = *a.tape();
  return t.record(a.value() * s.value()(0, 0), {a, s}, [a, s](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    t.accumulate_expr(a.id(), g * s.value()(0, 0));
    if (t.needs_grad(s.id())) {
      Mat gs(1, 1);
      gs(0, 0) = g.cwiseProduct(a.value()).sum();
      t.accumulate(s.id(), gs);
    }
  });
}

Var add_by(Var a, Var s) {
  require_scalar("add_by", s.value());
  Tape& t = *a.tape();
  Mat out = a.value().array() + s.value()(0, 0);
  return t.record(std::move(out), {a, s}, [a, s](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    t.accumulate(a.id(), g);
    if (t.needs_grad(s.id())) {
      Mat gs(1, 1);
      gs(0, 0) = g.sum();
      t.accumulate(s.id(), gs);
    }
  });
}

Var relu(Var a) {
  Tape& t = *a.tape();
  Mat out = a.value().cwiseMax(0.0);
  return t.record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    Mat g = (a.value().array() > 0.0).select(t.grad(self), 0.0);
    t.accumulate(a.id(), g);
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  Mat out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return t.record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Mat& y = t.value(self);
    t.accumulate_expr(a.id(), t.grad(self).cwiseProduct(y).cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var exp(Var a) {
  Tape& t = *a.tape();
  Mat out = a.value().array().exp();
  return t.record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate_expr(a.id(), t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var log(Var a) {
  Tape& t = *a.tape();
  Mat out = a.value().array().log();
  return t.record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate_expr(a.id(), t.grad(self).cwiseQuotient(a.value()));
  });
}

Var abs(Var a) {
  Tape& t = *a.tape();
  return t.record(a.value().cwiseAbs(), {a}, [a](Tape& t, std::size_t self) {
    Mat sign = a.value().unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
    t.accumulate_expr(a.id(), t.grad(self).cwiseProduct(sign));
  });
}

Var square(Var a) {
  Tape& t = *a.tape();
  return t.record(a.value().cwiseAbs2(), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate_expr(a.id(), 2.0 * t.grad(self).cwiseProduct(a.value()));
  });
}

// ---- row-wise normalizers ---------------------------------------------------

Var softmax_rows(Var x) {
  const Mat& X = x.value();
  Mat out(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double m = X.row(r).maxCoeff();
    out.row(r) = (X.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  Tape& t = *x.tape();
  return t.record(std::move(out), {x}, [x](Tape& t, std::size_t self) {
    const Mat& y = t.value(self);
    const Mat& g = t.grad(self);
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Mat gx = y.cwiseProduct((g.colwise() - dot));
    t.accumulate(x.id(), gx);
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Mat& X = x.value();
  const Eigen::Index d = X.cols();
  if (d < 2) throw DimensionError("layer_norm_rows: need at least 2 columns, got " + shape_str(X));
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw DimensionError("layer_norm_rows: gain/bias must be 1x" + std::to_string(d));
  Mat xhat(X.rows(), d);
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
  }
  Mat out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
            bias.value().row(0).array();
  Tape& t = *x.tape();
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, xhat = std::move(xhat), inv_std](Tape& t, std::size_t self) {
                    const Mat& g = t.grad(self);
                    if (t.needs_grad(gain.id()))
                      t.accumulate_expr(gain.id(), g.cwiseProduct(xhat).colwise().sum());
                    if (t.needs_grad(bias.id())) t.accumulate_expr(bias.id(), g.colwise().sum());
                    if (t.needs_grad(x.id())) {
                      Mat dxhat = g.array().rowwise() * gain.value().row(0).array();
                      Mat gx(dxhat.rows(), dxhat.cols());
                      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                        const double m1 = dxhat.row(r).mean();
                        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                        gx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                      }
                      t.accumulate(x.id(), gx);
                    }
                  });
}

// ---- reductions and reshaping -----------------------------------------------

Var sum(Var a) {
  Tape& t = *a.tape();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    t.accumulate_expr(a.id(), Mat::Constant(a.rows(), a.cols(), g));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
  const Mat& A = a.value();
  if (start < 0 || n < 0 || start + n > A.cols())
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + n) + ") out of " + shape_str(A));
  Tape& t = *a.tape();
  return t.record(A.middleCols(start, n), {a}, [a, start, n](Tape& t, std::size_t self) {
    Mat g = Mat::Zero(a.rows(), a.cols());
    g.middleCols(start, n) = t.grad(self);
    t.accumulate(a.id(), g);
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  const Mat& A = a.value();
  if (start < 0 || n < 0 || start + n > A.rows())
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + n) + ") out of " + shape_str(A));
  Tape& t = *a.tape();
  return t.record(A.middleRows(start, n), {a}, [a, start, n](Tape& t, std::size_t self) {
    Mat g = Mat::Zero(a.rows(), a.cols());
    g.middleRows(start, n) = t.grad(self);
    t.accumulate(a.id(), g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows)
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().value()) +
                           " vs " + shape_str(p.value()));
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Tape& t = *parts.front().tape();
  return t.record(std::move(out), parts, [parts](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
      if (t.needs_grad(p.id())) t.accumulate_expr(p.id(), g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var pick(Var a, Eigen::Index r, Eigen::Index c) {
  const Mat& A = a.value();
  if (r < 0 || c < 0 || r >= A.rows() || c >= A.cols())
    throw DimensionError("pick: (" + std::to_string(r) + "," + std::to_string(c) +
                         ") out of " + shape_str(A));
  Mat out(1, 1);
  out(0, 0) = A(r, c);
  Tape& t = *a.tape();
  return t.record(std::move(out), {a}, [a, r, c](Tape& t, std::size_t self) {
    Mat g = Mat::Zero(a.rows(), a.cols());
    g(r, c) = t.grad(self)(0, 0);
    t.accumulate(a.id(), g);
  });
}

Var gather(Var row, const std::vector<Eigen::Index>& index) {
  const Mat& R = row.value();
  if (R.rows() != 1) throw DimensionError("gather: expected a row vector, got " + shape_str(R));
  Mat out(1, static_cast<Eigen::Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= R.cols())
      throw DimensionError("gather: index " + std::to_string(index[i]) + " out of " +
                           shape_str(R));
    out(0, static_cast<Eigen::Index>(i)) = R(0, index[i]);
  }
  Tape& t = *row.tape();
  return t.record(std::move(out), {row}, [row, index](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat gr = Mat::Zero(1, row.cols());
    for (std::size_t i = 0; i < index.size(); ++i) gr(0, index[i]) += g(0, static_cast<Eigen::Index>(i));
    t.accumulate(row.id(), gr);
  });
}

Var toeplitz(Var offsets, Eigen::Index L) {
  const Mat& O = offsets.value();
  if (O.rows() != 1 || O.cols() != 2 * L - 1)
    throw DimensionError("toeplitz: expected 1x" + std::to_string(2 * L - 1) + " offsets, got " +
                         shape_str(O));
  Mat out(L, L);
  for (Eigen::Index i = 0; i < L; ++i)
    for (Eigen::Index j = 0; j < L; ++j) out(i, j) = O(0, i - j + L - 1);
  Tape& t = *offsets.tape();
  return t.record(std::move(out), {offsets}, [offsets, L](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat go = Mat::Zero(1, 2 * L - 1);
    for (Eigen::Index i = 0; i < L; ++i)
      for (Eigen::Index j = 0; j < L; ++j) go(0, i - j + L - 1) += g(i, j);
    t.accumulate(offsets.id(), go);
  });
}

namespace {

// Rotates (or inversely rotates) column pairs of each row in place.
void rotate_pairs(Mat& m, bool inverse) {
  const Eigen::Index d = m.cols();
  for (Eigen::Index l = 0; l < m.rows(); ++l) {
    for (Eigen::Index p = 0; p < d / 2; ++p) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(p) / static_cast<double>(d));
      const double theta = static_cast<double>(l) * freq * (inverse ? -1.0 : 1.0);
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      const double x0 = m(l, 2 * p);
      const double x1 = m(l, 2 * p + 1);
      m(l, 2 * p) = x0 * c - x1 * s;
      m(l, 2 * p + 1) = x0 * s + x1 * c;
    }
  }
}

}  // namespace

Var rope_rotate(Var x) {
  if (x.cols() % 2 != 0)
    throw DimensionError("rope_rotate: head dimension must be even, got " + shape_str(x.value()));
  Mat out = x.value();
  rotate_pairs(out, false);
  Tape& t = *x.tape();
  return t.record(std::move(out), {x}, [x](Tape& t, std::size_t self) {
    Mat g = t.grad(self);
    rotate_pairs(g, true);
    t.accumulate(x.id(), g);
  });
}

Var mse(Var pred, Var target) { return mean(square(sub(pred, target))); }

}  // namespace lgse
