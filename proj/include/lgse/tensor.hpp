#pragma once

// Dense 2-D tensors with tape-based reverse-mode differentiation.
//
// Every value in the model is a row-major double matrix; scalars are 1x1 and
// vectors are 1xn rows. A Tape records operations in creation order, which is
// a topological order by construction, so backward() is a single reverse
// sweep over the recorded nodes.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgse {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

std::string shape_str(const Mat& m);

/// A named trainable tensor owned by a model. `grad` accumulates across
/// backward passes until zeroed.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  /// With record_grad == false parameters enter as constants and no
  /// backward closures are kept (inference mode).
  explicit Tape(bool record_grad) : record_grad_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  /// Leaf bound to `p`; backward() adds d(loss)/d(p) into p.grad.
  Var parameter(Parameter& p);

  /// Records a derived node. `parents` decide whether the node needs a grad.
  Var record(Mat value, std::initializer_list<Var> parents, Backprop fn);
  Var record(Mat value, const std::vector<Var>& parents, Backprop fn);

  /// Reverse sweep from a scalar loss. Throws ContractError for non-scalars.
  void backward(Var loss);

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  const Mat& grad(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Accumulates `g` into the gradient of node `id` if it participates.
  void accumulate(std::size_t id, const Mat& g);
  template <typename Expr>
  void accumulate_expr(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backprop backprop;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  bool record_grad_ = true;
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
/// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var div(Var a, Var b);  // elementwise
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

/// Adds a 1xn row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Multiplies every entry of a by the 1x1 tensor s.
Var mul_by(Var a, Var s);
/// Adds the 1x1 tensor s to every entry of a.
Var add_by(Var a, Var s);

Var relu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var abs(Var a);
Var square(Var a);

Var softmax_rows(Var x);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

Var sum(Var a);
Var mean(Var a);

Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var concat_cols(const std::vector<Var>& parts);
/// 1x1 tensor holding a(r, c).
Var pick(Var a, Eigen::Index r, Eigen::Index c);
/// out(0, i) = row(0, index[i]).
Var gather(Var row, const std::vector<Eigen::Index>& index);
/// L x L matrix with out(i, j) = offsets(0, i - j + L - 1).
Var toeplitz(Var offsets, Eigen::Index L);
/// Rotates consecutive column pairs of row l by l * 10000^(-2m/d).
Var rope_rotate(Var x);

/// mean((pred - target)^2) over every cell.
Var mse(Var pred, Var target);

}  // namespace lgse
