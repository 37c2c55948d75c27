// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation of one forward pass. Leaves are either
// constants (no gradient) or Parameters, whose gradients are accumulated into
// Parameter::grad when Tape::backward is called. Nodes whose inputs carry no
// gradient are never visited on the way back.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <string>
#include <vector>

namespace hsc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace hsc

namespace hsc::ad {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string name, Matrix init);

  void zero_grad();
  Eigen::Index size() const { return value.size(); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);

  Var record(Matrix value, std::span<const Var> parents, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  /// Propagates d(output)/d(node) through the tape; output must be 1x1.
  /// Parameter gradients are added to (not overwritten in) Parameter::grad.
  void backward(Var output);

  const Matrix& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }

  /// Gradient held by a node after backward(); a zero matrix if none reached it.
  Matrix grad(Var v) const;

  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id())].requires_grad; }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[static_cast<size_t>(v.id())];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
      node.grad = g;
    else
      node.grad += g;
  }

  /// Adds g into one column of a node's gradient without materializing the rest.
  void accumulate_col(Var v, Eigen::Index col, const Eigen::Ref<const Vector>& g);
  /// Adds g into the block of a node's gradient starting at (row, col).
  void accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Eigen::Ref<const Matrix>& g);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var make(Node node);

  std::vector<Node> nodes_;
};

/// Binds each Parameter to a single leaf on a tape, so a parameter used many
/// times in one forward pass is copied onto the tape once.
class Binder {
 public:
  explicit Binder(Tape& tape) : tape_(tape) {}
  Var operator()(Parameter& p);
  Tape& tape() const { return tape_; }

 private:
  Tape& tape_;
  std::unordered_map<const Parameter*, Var> leaves_;
};

// ---------------------------------------------------------------------------
// Operations. Column vectors are n x 1 matrices throughout.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

/// a + b where b is 1x1, 1 x a.cols(), a.rows() x 1, or the shape of a.
Var add_broadcast(Var a, Var b);
/// a .* b with the same broadcasting rules as add_broadcast.
Var mul_broadcast(Var a, Var b);

Var relu(Var a);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

Var softmax_rows(Var a);
Var softmax_cols(Var a);
/// Softmax of a 1 x T row taken separately over each segment
/// [bounds[i], bounds[i+1]); bounds starts at 0 and ends at T.
Var softmax_segments(Var row, std::span<const Eigen::Index> bounds);

/// [a a ... a], `times` copies side by side.
Var repeat_cols(Var a, Eigen::Index times);
/// Row-wise max over consecutive column blocks: R x (B*block) -> R x B.
Var block_row_max(Var a, Eigen::Index block);

/// Max over columns for every row: R x C -> R x 1.
Var row_max(Var a);
/// Column sums: R x C -> 1 x C.
Var sum_rows(Var a);

Var sum(Var a);
Var sum_squares(Var a);
/// Elementwise Huber with unit threshold, summed: 0.5x^2 if |x| <= 1 else |x| - 0.5.
Var huber(Var a);
/// Binary cross-entropy of a 1x1 logit against a {0,1} label.
Var bce_with_logits(Var logit, double label);

/// Unfolds a C x L input into (C*k) x L_out patches for a stride-s, k-wide
/// convolution with `pad` zero columns on each side. Row c*k + t of column p
/// holds input(c, p*s + t - pad).
Var im2col(Var x, int kernel, int stride, int pad);

/// Columns of a d x V table for the given ids; id 0 is padding and yields a
/// zero column that receives no gradient.
Var gather_cols(Var table, std::span<const int> ids);

}  // namespace hsc::ad
