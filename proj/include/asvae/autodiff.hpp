// Reverse-mode automatic differentiation on an append-only tape.
//
// A Tape owns every intermediate value of one forward pass. Var is a cheap
// handle (tape pointer + node index). Nodes are appended in evaluation order,
// so the creation order is already a topological order and backward() is a
// single reverse sweep that visits each node once.
//
// Broadcasting is limited to the right operand of add/sub/mul being a single
// row ([N] or [1,N]) applied to every row of the left operand.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "asvae/errors.hpp"
#include "asvae/tensor.hpp"

namespace asvae {

enum class OpKind : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Neg,
  Exp,
  Log,
  Tanh,
  Sigmoid,
  Softplus,
  Square,
  Sum,
  Mean,
  RowSum,
  Concat,
  Slice,
  Scale,
  Offset,
  LeakyRelu,
  Clamp,
};

inline const char* op_name(OpKind k) noexcept {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Neg: return "neg";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softplus: return "softplus";
    case OpKind::Square: return "square";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::RowSum: return "row_sum";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Scale: return "scale";
    case OpKind::Offset: return "offset";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Clamp: return "clamp";
  }
  return "?";
}

/// Numerically stable scalar helpers.
inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) noexcept {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct TapeNode {
  OpKind kind = OpKind::Leaf;
  std::array<std::size_t, 2> inputs{};
  std::uint8_t n_inputs = 0;
  bool requires_grad = false;
  bool broadcast = false;  // right operand broadcast over rows
  double p0 = 0.0;         // scale factor, slope, lower bound, ...
  double p1 = 0.0;         // upper bound
  std::size_t offset = 0;  // slice start
  Tensor value;
  Tensor grad;
};

class Tape {
 public:
  /// In checked mode every op output is tested for NaN/Inf and log() rejects
  /// non-positive inputs.
  explicit Tape(bool checked = true) : checked_(checked) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool checked() const noexcept { return checked_; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var leaf(Tensor value, bool requires_grad) {
    if (checked_ && !value.all_finite()) throw NumericError("non-finite leaf value");
    TapeNode n;
    n.kind = OpKind::Leaf;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return append(std::move(n));
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Copy of x's value as a constant: gradients stop here.
  Var detach(Var x) { return constant(value(x)); }

  const Tensor& value(Var v) const { return node(v).value; }

  /// Gradient accumulated by the last backward(); empty for nodes that do not
  /// require a gradient.
  const Tensor& grad(Var v) const { return node(v).grad; }

  const TapeNode& node(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) {
      throw ContractError("variable does not belong to this tape");
    }
    return nodes_[v.id_];
  }

  /// Appends an op node. Public so that free-function ops can build nodes;
  /// the shape and domain checks live in those functions.
  Var append(TapeNode n) {
    if (consumed_) throw StateError("tape already consumed by backward()");
    if (checked_ && n.kind != OpKind::Leaf && !n.value.all_finite()) {
      throw NumericError(std::string("non-finite output from ") + op_name(n.kind));
    }
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  void backward(Var root);

 private:
  void accumulate(std::size_t id, const Tensor& g);
  void accumulate_broadcast(std::size_t id, const Tensor& g);

  std::vector<TapeNode> nodes_;
  bool checked_;
  bool consumed_ = false;
};

inline const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound variable");
  return tape_->value(*this);
}

inline bool Var::requires_grad() const { return tape_->node(*this).requires_grad; }

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

inline MatMap as_matrix(Tensor& t) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

inline Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw ContractError("operands live on different tapes");
  }
  return *a.tape();
}

inline TapeNode make_node(OpKind kind, std::initializer_list<Var> in, Tensor value) {
  TapeNode n;
  n.kind = kind;
  for (Var v : in) {
    n.inputs[n.n_inputs++] = v.id();
    n.requires_grad = n.requires_grad || v.requires_grad();
  }
  n.value = std::move(value);
  return n;
}

/// True when b is a single row to be broadcast across the rows of a.
inline bool broadcasts(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return false;
  const bool row_like = b.rank() == 1 || (b.rank() == 2 && b.shape()[0] == 1);
  if (a.rank() >= 2 && row_like && b.size() == a.cols()) return true;
  throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()) + " do not conform");
}

template <class F>
Var binary_elementwise(OpKind kind, Var a, Var b, F f) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool bc = broadcasts(av, bv, op_name(kind));
  Tensor out(av.shape());
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = f(av[i], bc ? bv[i % cols] : bv[i]);
  }
  TapeNode n = make_node(kind, {a, b}, std::move(out));
  n.broadcast = bc;
  return tape.append(std::move(n));
}

template <class F>
Var unary_elementwise(OpKind kind, Var a, F f, double p0 = 0.0, double p1 = 0.0) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  TapeNode n = make_node(kind, {a}, std::move(out));
  n.p0 = p0;
  n.p1 = p1;
  return a.tape()->append(std::move(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward ops

/// [M,K] x [K,N] -> [M,N].
inline Var matmul(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw DimensionError("matmul: shapes " + shape_string(av.shape()) + " and " +
                         shape_string(bv.shape()) + " do not conform");
  }
  Tensor out(Shape{av.shape()[0], bv.shape()[1]});
  detail::as_matrix(out).noalias() = detail::as_matrix(av) * detail::as_matrix(bv);
  return tape.append(detail::make_node(OpKind::MatMul, {a, b}, std::move(out)));
}

inline Var add(Var a, Var b) {
  return detail::binary_elementwise(OpKind::Add, a, b, [](double x, double y) { return x + y; });
}
inline Var sub(Var a, Var b) {
  return detail::binary_elementwise(OpKind::Sub, a, b, [](double x, double y) { return x - y; });
}
inline Var mul(Var a, Var b) {
  return detail::binary_elementwise(OpKind::Mul, a, b, [](double x, double y) { return x * y; });
}

/// [B,N] + [N]: the bias row is added to every row.
inline Var add_bias(Var x, Var bias) {
  const Tensor& b = bias.value();
  const bool row_like = b.rank() == 1 || (b.rank() == 2 && b.shape()[0] == 1);
  if (!row_like || b.size() != x.value().cols()) {
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " does not match " +
                         shape_string(x.value().shape()));
  }
  return add(x, bias);
}

inline Var neg(Var a) {
  return detail::unary_elementwise(OpKind::Neg, a, [](double x) { return -x; });
}
inline Var exp(Var a) {
  return detail::unary_elementwise(OpKind::Exp, a, [](double x) { return std::exp(x); });
}
inline Var log(Var a) {
  if (a.tape()->checked()) {
    for (double v : a.value().data()) {
      if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
    }
  }
  return detail::unary_elementwise(OpKind::Log, a, [](double x) { return std::log(x); });
}
inline Var tanh(Var a) {
  return detail::unary_elementwise(OpKind::Tanh, a, [](double x) { return std::tanh(x); });
}
inline Var sigmoid(Var a) {
  return detail::unary_elementwise(OpKind::Sigmoid, a, [](double x) { return sigmoid(x); });
}
inline Var softplus(Var a) {
  return detail::unary_elementwise(OpKind::Softplus, a, [](double x) { return softplus(x); });
}
inline Var square(Var a) {
  return detail::unary_elementwise(OpKind::Square, a, [](double x) { return x * x; });
}
inline Var scale(Var a, double c) {
  return detail::unary_elementwise(OpKind::Scale, a, [c](double x) { return c * x; }, c);
}
inline Var offset(Var a, double c) {
  return detail::unary_elementwise(OpKind::Offset, a, [c](double x) { return x + c; }, c);
}
/// x for x >= 0, slope * x otherwise. slope = 1 gives the identity.
inline Var leaky_relu(Var a, double slope) {
  return detail::unary_elementwise(
      OpKind::LeakyRelu, a, [slope](double x) { return x >= 0 ? x : slope * x; }, slope);
}
/// Clamp to [lo, hi]; the gradient is zero where the bound is active.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary_elementwise(
      OpKind::Clamp, a, [lo, hi](double x) { return std::clamp(x, lo, hi); }, lo, hi);
}

/// Sum of all entries -> scalar.
inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape()->append(detail::make_node(OpKind::Sum, {a}, Tensor::scalar(s)));
}

/// Mean of all entries -> scalar.
inline Var mean(Var a) {
  const Tensor& av = a.value();
  if (av.empty()) throw DimensionError("mean of empty tensor");
  double s = 0.0;
  for (double v : av.data()) s += v;
  return a.tape()->append(
      detail::make_node(OpKind::Mean, {a}, Tensor::scalar(s / static_cast<double>(av.size()))));
}

/// Sum over the last axis: [B,N] -> [B].
inline Var row_sum(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(Shape{r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[i * c + j];
    out[i] = s;
  }
  return a.tape()->append(detail::make_node(OpKind::RowSum, {a}, std::move(out)));
}

/// [B,N1] ++ [B,N2] -> [B,N1+N2].
inline Var concat(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) {
    throw DimensionError("concat: shapes " + shape_string(av.shape()) + " and " +
                         shape_string(bv.shape()) + " do not conform");
  }
  const std::size_t r = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor out(Shape{r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(av.data().begin() + i * ca, ca, out.data().begin() + i * (ca + cb));
    std::copy_n(bv.data().begin() + i * cb, cb, out.data().begin() + i * (ca + cb) + ca);
  }
  return tape.append(detail::make_node(OpKind::Concat, {a, b}, std::move(out)));
}

/// Columns [start, start+len) of a [B,N] tensor.
inline Var slice(Var a, std::size_t start, std::size_t len) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || start + len > av.cols() || len == 0) {
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(len) +
                         ") out of range for " + shape_string(av.shape()));
  }
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(Shape{r, len});
  for (std::size_t i = 0; i < r; ++i) std::copy_n(av.data().begin() + i * c + start, len, out.data().begin() + i * len);
  TapeNode n = detail::make_node(OpKind::Slice, {a}, std::move(out));
  n.offset = start;
  return a.tape()->append(std::move(n));
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

/// log sigma(x) = -softplus(-x), stable for large |x|.
inline Var log_sigmoid(Var a) { return neg(softplus(neg(a))); }
/// log(1 - sigma(x)) = -softplus(x).
inline Var log_one_minus_sigmoid(Var a) { return neg(softplus(a)); }

// ---------------------------------------------------------------------------
// Backward

inline void Tape::accumulate(std::size_t id, const Tensor& g) {
  TapeNode& n = nodes_[id];
  if (!n.requires_grad) return;
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

inline void Tape::accumulate_broadcast(std::size_t id, const Tensor& g) {
  TapeNode& n = nodes_[id];
  if (!n.requires_grad) return;
  const std::size_t c = n.value.size();
  auto dst = n.grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i % c] += g[i];
}

inline void Tape::backward(Var root) {
  if (consumed_) throw StateError("backward() called twice on the same tape");
  const TapeNode& r = node(root);
  if (r.value.size() != 1) {
    throw ContractError("backward root must be scalar, got shape " + shape_string(r.value.shape()));
  }
  consumed_ = true;
  const std::size_t last = root.id();
  for (std::size_t i = 0; i <= last; ++i) {
    if (nodes_[i].requires_grad) nodes_[i].grad = Tensor(nodes_[i].value.shape());
  }
  if (!nodes_[last].requires_grad) return;
  nodes_[last].grad[0] = 1.0;

  for (std::size_t idx = last + 1; idx-- > 0;) {
    TapeNode& n = nodes_[idx];
    if (!n.requires_grad || n.kind == OpKind::Leaf) continue;
    const Tensor& g = n.grad;
    const std::size_t a = n.inputs[0];
    const std::size_t b = n.inputs[1];
    const Tensor& av = nodes_[a].value;
    auto elementwise = [&](auto dfdx) {
      if (!nodes_[a].requires_grad) return;
      auto dst = nodes_[a].grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * dfdx(i);
    };

    switch (n.kind) {
      case OpKind::Leaf:
        break;
      case OpKind::MatMul: {
        const Tensor& bv = nodes_[b].value;
        if (nodes_[a].requires_grad) {
          detail::as_matrix(nodes_[a].grad).noalias() +=
              detail::as_matrix(g) * detail::as_matrix(bv).transpose();
        }
        if (nodes_[b].requires_grad) {
          detail::as_matrix(nodes_[b].grad).noalias() +=
              detail::as_matrix(av).transpose() * detail::as_matrix(g);
        }
        break;
      }
      case OpKind::Add:
      case OpKind::Sub: {
        accumulate(a, g);
        if (nodes_[b].requires_grad) {
          Tensor gb = g;
          if (n.kind == OpKind::Sub) {
            for (double& v : gb.data()) v = -v;
          }
          n.broadcast ? accumulate_broadcast(b, gb) : accumulate(b, gb);
        }
        break;
      }
      case OpKind::Mul: {
        const Tensor& bv = nodes_[b].value;
        const std::size_t cols = av.cols();
        if (nodes_[a].requires_grad) {
          auto dst = nodes_[a].grad.data();
          for (std::size_t i = 0; i < g.size(); ++i) {
            dst[i] += g[i] * (n.broadcast ? bv[i % cols] : bv[i]);
          }
        }
        if (nodes_[b].requires_grad) {
          auto dst = nodes_[b].grad.data();
          for (std::size_t i = 0; i < g.size(); ++i) {
            dst[n.broadcast ? i % cols : i] += g[i] * av[i];
          }
        }
        break;
      }
      case OpKind::Neg:
        elementwise([](std::size_t) { return -1.0; });
        break;
      case OpKind::Exp:
        elementwise([&](std::size_t i) { return n.value[i]; });
        break;
      case OpKind::Log:
        elementwise([&](std::size_t i) { return 1.0 / av[i]; });
        break;
      case OpKind::Tanh:
        elementwise([&](std::size_t i) { return 1.0 - n.value[i] * n.value[i]; });
        break;
      case OpKind::Sigmoid:
        elementwise([&](std::size_t i) { return n.value[i] * (1.0 - n.value[i]); });
        break;
      case OpKind::Softplus:
        elementwise([&](std::size_t i) { return asvae::sigmoid(av[i]); });
        break;
      case OpKind::Square:
        elementwise([&](std::size_t i) { return 2.0 * av[i]; });
        break;
      case OpKind::Scale:
        elementwise([&](std::size_t) { return n.p0; });
        break;
      case OpKind::Offset:
        elementwise([](std::size_t) { return 1.0; });
        break;
      case OpKind::LeakyRelu:
        elementwise([&](std::size_t i) { return av[i] >= 0 ? 1.0 : n.p0; });
        break;
      case OpKind::Clamp:
        elementwise([&](std::size_t i) { return (av[i] >= n.p0 && av[i] <= n.p1) ? 1.0 : 0.0; });
        break;
      case OpKind::Sum:
      case OpKind::Mean: {
        if (!nodes_[a].requires_grad) break;
        const double s = n.kind == OpKind::Sum ? g[0] : g[0] / static_cast<double>(av.size());
        for (double& v : nodes_[a].grad.data()) v += s;
        break;
      }
      case OpKind::RowSum: {
        if (!nodes_[a].requires_grad) break;
        const std::size_t c = av.cols();
        auto dst = nodes_[a].grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i / c];
        break;
      }
      case OpKind::Concat: {
        const std::size_t ca = av.cols();
        const std::size_t cb = nodes_[b].value.cols();
        const std::size_t rows = av.rows();
        for (std::size_t i = 0; i < rows; ++i) {
          if (nodes_[a].requires_grad) {
            for (std::size_t j = 0; j < ca; ++j) nodes_[a].grad[i * ca + j] += g[i * (ca + cb) + j];
          }
          if (nodes_[b].requires_grad) {
            for (std::size_t j = 0; j < cb; ++j) {
              nodes_[b].grad[i * cb + j] += g[i * (ca + cb) + ca + j];
            }
          }
        }
        break;
      }
      case OpKind::Slice: {
        if (!nodes_[a].requires_grad) break;
        const std::size_t c = av.cols();
        const std::size_t len = n.value.cols();
        for (std::size_t i = 0; i < av.rows(); ++i) {
          for (std::size_t j = 0; j < len; ++j) nodes_[a].grad[i * c + n.offset + j] += g[i * len + j];
        }
        break;
      }
    }
  }
}

}  // namespace asvae
