#include "hsc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace hsc::ad {

Parameter::Parameter(std::string name, Matrix init)
    : name(std::move(name)), value(std::move(init)), grad(Matrix::Zero(value.rows(), value.cols())) {}

void Parameter::zero_grad() { grad.setZero(value.rows(), value.cols()); }

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1)
    throw std::logic_error(fmt::format("scalar() on a {}x{} node", v.rows(), v.cols()));
  return v(0, 0);
}

Var Tape::make(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return make(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return make(std::move(n));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) throw std::logic_error("operand belongs to a different tape");
    n.requires_grad = n.requires_grad || requires_grad(p);
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return make(std::move(n));
}

void Tape::backward(Var output) {
  if (output.tape() != this) throw std::logic_error("backward() on a foreign node");
  Node& out = nodes_[static_cast<size_t>(output.id())];
  if (out.value.rows() != 1 || out.value.cols() != 1)
    throw std::logic_error("backward() needs a scalar output");
  if (!out.requires_grad) return;
  out.grad = Matrix::Ones(1, 1);
  for (int id = output.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<size_t>(id)];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.param != nullptr) {
      node.param->grad += node.grad;
    } else if (node.backward) {
      // Copy: the callback may not alias its own gradient buffer.
      const Matrix g = node.grad;
      node.backward(*this, g);
    }
  }
}

void Tape::accumulate_col(Var v, Eigen::Index col, const Eigen::Ref<const Vector>& g) {
  Node& node = nodes_[static_cast<size_t>(v.id())];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  node.grad.col(col) += g;
}

void Tape::accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Eigen::Ref<const Matrix>& g) {
  Node& node = nodes_[static_cast<size_t>(v.id())];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  node.grad.block(row, col, g.rows(), g.cols()) += g;
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<size_t>(v.id())];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Binder::operator()(Parameter& p) {
  auto it = leaves_.find(&p);
  if (it != leaves_.end()) return it->second;
  Var v = tape_.param(p);
  leaves_.emplace(&p, v);
  return v;
}

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok)
    throw std::invalid_argument(
        fmt::format("{}: incompatible shapes {}x{} and {}x{}", op, a.rows(), a.cols(), b.rows(), b.cols()));
}

enum class Broadcast { Same, Scalar, Row, Col };

Broadcast broadcast_kind(const char* op, const Matrix& a, const Matrix& b) {
  if (b.rows() == a.rows() && b.cols() == a.cols()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  require(false, op, a, b);
  return Broadcast::Same;
}

Matrix expand(const Matrix& b, Broadcast kind, Eigen::Index rows, Eigen::Index cols) {
  switch (kind) {
    case Broadcast::Same: return b;
    case Broadcast::Scalar: return Matrix::Constant(rows, cols, b(0, 0));
    case Broadcast::Row: return b.replicate(rows, 1);
    case Broadcast::Col: return b.replicate(1, cols);
  }
  return b;
}

Matrix reduce(const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::Same: return g;
    case Broadcast::Scalar: return Matrix::Constant(1, 1, g.sum());
    case Broadcast::Row: return g.colwise().sum();
    case Broadcast::Col: return g.rowwise().sum();
  }
  return g;
}

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.tape()->record(std::move(out), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", a.value(), b.value());
  Matrix out = a.value() + b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a.value(), b.value());
  Matrix out = a.value() - b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var hadamard(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape()->record(std::move(out), {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(Var a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_broadcast(Var a, Var b) {
  const Broadcast kind = broadcast_kind("add_broadcast", a.value(), b.value());
  Matrix out = a.value() + expand(b.value(), kind, a.rows(), a.cols());
  return a.tape()->record(std::move(out), {a, b}, [a, b, kind](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, reduce(g, kind));
  });
}

Var mul_broadcast(Var a, Var b) {
  const Broadcast kind = broadcast_kind("mul_broadcast", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(expand(b.value(), kind, a.rows(), a.cols()));
  return a.tape()->record(std::move(out), {a, b}, [a, b, kind](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(expand(b.value(), kind, a.rows(), a.cols())));
    if (t.requires_grad(b)) t.accumulate(b, reduce(g.cwiseProduct(a.value()), kind));
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [owned](Tape& t, const Matrix& g) {
    Eigen::Index r0 = 0;
    for (const Var& p : owned) {
      t.accumulate(p, g.middleRows(r0, p.rows()));
      r0 += p.rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [owned](Tape& t, const Matrix& g) {
    Eigen::Index c0 = 0;
    for (const Var& p : owned) {
      t.accumulate(p, g.middleCols(c0, p.cols()));
      c0 += p.cols();
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::out_of_range(fmt::format("slice_rows [{}, {}) of {} rows", start, start + count, a.rows()));
  Matrix out = a.value().middleRows(start, count);
  return a.tape()->record(std::move(out), {a},
                          [a, start](Tape& t, const Matrix& g) { t.accumulate_block(a, start, 0, g); });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::out_of_range(fmt::format("slice_cols [{}, {}) of {} cols", start, start + count, a.cols()));
  Matrix out = a.value().middleCols(start, count);
  return a.tape()->record(std::move(out), {a},
                          [a, start](Tape& t, const Matrix& g) { t.accumulate_block(a, 0, start, g); });
}

Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  Matrix s = out;
  return a.tape()->record(std::move(out), {a}, [a, s = std::move(s)](Tape& t, const Matrix& g) {
    const Matrix inner = g.cwiseProduct(s).rowwise().sum();
    t.accumulate(a, s.cwiseProduct(g - inner.replicate(1, s.cols())));
  });
}

Var softmax_cols(Var a) { return transpose(softmax_rows(transpose(a))); }

Var softmax_segments(Var row, std::span<const Eigen::Index> bounds) {
  const Matrix& x = row.value();
  if (x.rows() != 1) throw std::invalid_argument("softmax_segments expects a single row");
  if (bounds.size() < 2 || bounds.front() != 0 || bounds.back() != x.cols())
    throw std::invalid_argument("softmax_segments: bounds must run from 0 to the row length");
  Matrix out(1, x.cols());
  for (size_t s = 0; s + 1 < bounds.size(); ++s) {
    const Eigen::Index b = bounds[s], n = bounds[s + 1] - bounds[s];
    if (n <= 0) throw std::invalid_argument("softmax_segments: empty segment");
    auto seg = x.middleCols(b, n);
    Matrix e = (seg.array() - seg.maxCoeff()).exp();
    out.middleCols(b, n) = e / e.sum();
  }
  std::vector<Eigen::Index> owned(bounds.begin(), bounds.end());
  return row.tape()->record(out, {row}, [row, out, owned](Tape& t, const Matrix& g) {
    Matrix dx(1, out.cols());
    for (size_t s = 0; s + 1 < owned.size(); ++s) {
      const Eigen::Index b = owned[s], n = owned[s + 1] - owned[s];
      const double dot = out.middleCols(b, n).cwiseProduct(g.middleCols(b, n)).sum();
      dx.middleCols(b, n) = out.middleCols(b, n).array() * (g.middleCols(b, n).array() - dot);
    }
    t.accumulate(row, dx);
  });
}

Var repeat_cols(Var a, Eigen::Index times) {
  if (times < 1) throw std::invalid_argument("repeat_cols: times must be positive");
  Matrix out = a.value().replicate(1, times);
  return a.tape()->record(std::move(out), {a}, [a, times](Tape& t, const Matrix& g) {
    Matrix dx = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index k = 0; k < times; ++k) dx += g.middleCols(k * a.cols(), a.cols());
    t.accumulate(a, dx);
  });
}

Var block_row_max(Var a, Eigen::Index block) {
  const Matrix& x = a.value();
  if (block < 1 || x.cols() % block != 0)
    throw std::invalid_argument(fmt::format("block_row_max: {} cols not divisible into blocks of {}", x.cols(), block));
  const Eigen::Index blocks = x.cols() / block;
  Matrix out(x.rows(), blocks);
  std::vector<Eigen::Index> arg(static_cast<size_t>(x.rows() * blocks));
  for (Eigen::Index b = 0; b < blocks; ++b)
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      Eigen::Index k = 0;
      out(r, b) = x.row(r).segment(b * block, block).maxCoeff(&k);
      arg[static_cast<size_t>(b * x.rows() + r)] = b * block + k;
    }
  return a.tape()->record(std::move(out), {a}, [a, arg, blocks](Tape& t, const Matrix& g) {
    Matrix dx = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index b = 0; b < blocks; ++b)
      for (Eigen::Index r = 0; r < a.rows(); ++r) dx(r, arg[static_cast<size_t>(b * a.rows() + r)]) += g(r, b);
    t.accumulate(a, dx);
  });
}

Var row_max(Var a) {
  const Matrix& x = a.value();
  if (x.cols() == 0) throw std::invalid_argument("row_max of an empty matrix");
  Matrix out(x.rows(), 1);
  std::vector<Eigen::Index> arg(static_cast<size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) out(r, 0) = x.row(r).maxCoeff(&arg[static_cast<size_t>(r)]);
  return a.tape()->record(std::move(out), {a}, [a, arg](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) full(r, arg[static_cast<size_t>(r)]) = g(r, 0);
    t.accumulate(a, full);
  });
}

Var sum_rows(Var a) {
  Matrix out = a.value().colwise().sum();
  return a.tape()->record(std::move(out), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g.replicate(a.rows(), 1)); });
}

Var sum(Var a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var sum_squares(Var a) {
  Matrix out = Matrix::Constant(1, 1, a.value().squaredNorm());
  return a.tape()->record(std::move(out), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, a.value() * (2.0 * g(0, 0))); });
}

Var huber(Var a) {
  const Matrix& x = a.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = std::abs(x(i));
    total += v <= 1.0 ? 0.5 * v * v : v - 0.5;
  }
  return a.tape()->record(Matrix::Constant(1, 1, total), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix& x0 = a.value();
    Matrix d(x0.rows(), x0.cols());
    for (Eigen::Index i = 0; i < x0.size(); ++i) d(i) = std::clamp(x0(i), -1.0, 1.0);
    t.accumulate(a, d * g(0, 0));
  });
}

Var bce_with_logits(Var logit, double label) {
  const double z = logit.scalar();
  // softplus(z) - label * z, written to stay finite for large |z|.
  const double loss = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - label * z;
  return logit.tape()->record(Matrix::Constant(1, 1, loss), {logit}, [logit, label, z](Tape& t, const Matrix& g) {
    const double p = 1.0 / (1.0 + std::exp(-z));
    t.accumulate(logit, Matrix::Constant(1, 1, (p - label) * g(0, 0)));
  });
}

Var im2col(Var x, int kernel, int stride, int pad) {
  const Eigen::Index channels = x.rows();
  const Eigen::Index length = x.cols() + 2 * pad;
  if (kernel < 1 || stride < 1 || pad < 0) throw std::invalid_argument("im2col: bad kernel/stride/pad");
  if (length < kernel)
    throw std::invalid_argument(fmt::format("im2col: padded length {} shorter than kernel {}", length, kernel));
  const Eigen::Index out_len = (length - kernel) / stride + 1;
  const Matrix& v = x.value();
  Matrix out = Matrix::Zero(channels * kernel, out_len);
  for (Eigen::Index p = 0; p < out_len; ++p)
    for (Eigen::Index c = 0; c < channels; ++c)
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = p * stride + k - pad;
        if (src >= 0 && src < v.cols()) out(c * kernel + k, p) = v(c, src);
      }
  return x.tape()->record(std::move(out), {x}, [x, kernel, stride, pad, out_len](Tape& t, const Matrix& g) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index p = 0; p < out_len; ++p)
      for (Eigen::Index c = 0; c < x.rows(); ++c)
        for (int k = 0; k < kernel; ++k) {
          const Eigen::Index src = p * stride + k - pad;
          if (src >= 0 && src < dx.cols()) dx(c, src) += g(c * kernel + k, p);
        }
    t.accumulate(x, dx);
  });
}

Var gather_cols(Var table, std::span<const int> ids) {
  const Matrix& w = table.value();
  Matrix out = Matrix::Zero(w.rows(), static_cast<Eigen::Index>(ids.size()));
  for (size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= w.cols())
      throw std::out_of_range(fmt::format("token id {} outside vocabulary of size {}", ids[j], w.cols()));
    if (ids[j] != 0) out.col(static_cast<Eigen::Index>(j)) = w.col(ids[j]);
  }
  std::vector<int> owned(ids.begin(), ids.end());
  return table.tape()->record(std::move(out), {table}, [table, owned](Tape& t, const Matrix& g) {
    for (size_t j = 0; j < owned.size(); ++j)
      if (owned[j] != 0) t.accumulate_col(table, owned[j], g.col(static_cast<Eigen::Index>(j)));
  });
}

}  // namespace hsc::ad
