#pragma once

#include "numerics/parameter.hpp"

#include <functional>
#include <span>
#include <vector>

namespace clap::numerics {

template <typename S>
class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int index = -1;

  bool valid() const { return tape != nullptr && index >= 0; }
  const Matrix<S>& value() const { return tape->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  S item() const { return value()(0, 0); }
};

// Reverse-mode gradient recorder over dense row-major matrices.
//
// Every operation appends a node holding its value and a closure that pushes
// the node's gradient into its inputs. `backward` walks nodes in reverse
// creation order, so a node's gradient is complete before its closure runs.
// Nodes that cannot reach a trainable parameter are never differentiated.
//
// Binary elementwise operations broadcast an operand whose row or column
// count is 1 against the other operand.
template <typename S>
class Tape {
 public:
  using Mat = Matrix<S>;
  using V = Var<S>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  V constant(Mat value);
  V constant(Index rows, Index cols, S fill);
  V param(Parameter<S>& p);

  const Mat& value(V v) const { return nodes_[static_cast<std::size_t>(v.index)].value; }
  const Mat& grad(V v) const { return nodes_[static_cast<std::size_t>(v.index)].grad; }
  bool requires_grad(V v) const { return nodes_[static_cast<std::size_t>(v.index)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Accumulates d(loss)/d(param) into every participating trainable
  // Parameter's `grad`. `loss` must be 1x1. A tape can be consumed once.
  void backward(V loss);

  // Linear algebra
  V matmul(V a, V b);
  V affine(V x, V w, V b);  // x*w + b with b a 1xC row
  V concat_cols(std::span<const V> parts);
  V slice_cols(V a, Index start, Index count);
  V gather_rows(V a, std::span<const Index> rows);

  // Elementwise binary (broadcasting)
  V add(V a, V b);
  V sub(V a, V b);
  V mul(V a, V b);
  V div(V a, V b);
  V minimum(V a, V b);
  // cond != 0 picks a, otherwise b. cond must match the output shape.
  V select(const Mat& cond, V a, V b);

  // Scalar arithmetic
  V scale(V a, S k);
  V add_scalar(V a, S k);
  V neg(V a) { return scale(a, S(-1)); }

  // Elementwise unary
  V exp(V a);
  V log(V a);
  V tanh(V a);
  V atanh(V a);
  V sigmoid(V a);
  V softplus(V a);
  V selu(V a);
  V square(V a);
  V sqrt(V a);
  V lgamma(V a);
  V clamp(V a, S lo, S hi);

  // Reductions
  V sum(V a);       // -> 1x1
  V mean(V a);      // -> 1x1
  V row_sum(V a);   // -> Rx1

  V stop_gradient(V a) { return constant(value(a)); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter<S>* param = nullptr;
    std::function<void()> backward;
  };

  V push(Mat value, bool requires_grad);
  Node& node(int index) { return nodes_[static_cast<std::size_t>(index)]; }
  const Node& node(int index) const { return nodes_[static_cast<std::size_t>(index)]; }
  template <typename Expr>
  void accumulate(int index, const Expr& g);
  void accumulate_reduced(int index, const Mat& g);
  template <typename Fwd, typename Deriv>
  V unary(V a, Fwd fwd, Deriv deriv);
  V broadcast_binary(V a, V b, int op);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Free-function spelling for model code.
template <typename S> Var<S> operator+(Var<S> a, Var<S> b) { return a.tape->add(a, b); }
template <typename S> Var<S> operator-(Var<S> a, Var<S> b) { return a.tape->sub(a, b); }
template <typename S> Var<S> operator*(Var<S> a, Var<S> b) { return a.tape->mul(a, b); }
template <typename S> Var<S> operator/(Var<S> a, Var<S> b) { return a.tape->div(a, b); }
template <typename S> Var<S> operator-(Var<S> a) { return a.tape->neg(a); }
template <typename S> Var<S> operator*(Var<S> a, S k) { return a.tape->scale(a, k); }
template <typename S> Var<S> operator*(S k, Var<S> a) { return a.tape->scale(a, k); }
template <typename S> Var<S> operator+(Var<S> a, S k) { return a.tape->add_scalar(a, k); }
template <typename S> Var<S> operator+(S k, Var<S> a) { return a.tape->add_scalar(a, k); }
template <typename S> Var<S> operator-(Var<S> a, S k) { return a.tape->add_scalar(a, -k); }
template <typename S> Var<S> operator-(S k, Var<S> a) { return a.tape->add_scalar(a.tape->neg(a), k); }

template <typename S> Var<S> matmul(Var<S> a, Var<S> b) { return a.tape->matmul(a, b); }
template <typename S> Var<S> exp(Var<S> a) { return a.tape->exp(a); }
template <typename S> Var<S> log(Var<S> a) { return a.tape->log(a); }
template <typename S> Var<S> tanh(Var<S> a) { return a.tape->tanh(a); }
template <typename S> Var<S> sigmoid(Var<S> a) { return a.tape->sigmoid(a); }
template <typename S> Var<S> softplus(Var<S> a) { return a.tape->softplus(a); }
template <typename S> Var<S> selu(Var<S> a) { return a.tape->selu(a); }
template <typename S> Var<S> square(Var<S> a) { return a.tape->square(a); }
template <typename S> Var<S> sqrt(Var<S> a) { return a.tape->sqrt(a); }
template <typename S> Var<S> lgamma(Var<S> a) { return a.tape->lgamma(a); }
template <typename S> Var<S> sum(Var<S> a) { return a.tape->sum(a); }
template <typename S> Var<S> mean(Var<S> a) { return a.tape->mean(a); }
template <typename S> Var<S> row_sum(Var<S> a) { return a.tape->row_sum(a); }
template <typename S> Var<S> minimum(Var<S> a, Var<S> b) { return a.tape->minimum(a, b); }
template <typename S> Var<S> stop_gradient(Var<S> a) { return a.tape->stop_gradient(a); }
template <typename S> Var<S> concat_cols(std::initializer_list<Var<S>> parts) {
  std::vector<Var<S>> v(parts);
  return v.front().tape->concat_cols(v);
}

}  // namespace clap::numerics
