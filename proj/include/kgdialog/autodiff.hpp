#pragma once
// Reverse-mode automatic differentiation on a tape of tensor nodes.
//
// Ops may only reference earlier nodes, so creation order is already a
// topological order; backward() walks it once in reverse. Gradients
// accumulate additively, which makes shared subexpressions (and embedding
// rows selected more than once) come out right without bookkeeping.
//
// The op set is the minimum the models in this project need; everything is
// eagerly evaluated, so node.value is always available right after
// construction.

#include <cstddef>
#include <functional>
#include <vector>

#include "kgdialog/tensor.hpp"

namespace kgdialog::neural {

class Tape {
 public:
  struct Var {
    std::size_t id = SIZE_MAX;
    bool valid() const { return id != SIZE_MAX; }
  };

  Var leaf(Tensor value);

  // elementwise, same shape
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);

  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }

  Var dot(Var a, Var b);                 // vectors -> scalar
  Var matvec(Var m, Var x);              // [r x c] . [c] -> [r]
  Var matvec_transposed(Var m, Var x);   // [r x c]^T . [r] -> [c]
  Var concat(Var a, Var b);              // vectors

  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var exp(Var a);
  // ln(max(x, floor)); the clamp region backpropagates zero
  Var log_clamped(Var a, double floor = 1e-12);
  Var pow_const(Var a, double exponent);  // requires a >= 0 elementwise
  Var softmax(Var a);                     // vector, numerically stable

  Var sum(Var a);                                        // -> scalar
  Var pick(Var a, std::size_t i);                        // a[i] -> scalar
  Var pick_sum(Var a, std::vector<std::size_t> idx);     // sum a[idx]
  // mean of the selected matrix rows (duplicates allowed) -> [cols]
  Var mean_rows(Var m, std::vector<std::size_t> rows);
  Var row(Var m, std::size_t r);                         // -> [cols]
  // stacked rows a[ra[i]] + b[rb[i]] -> [len x cols]
  Var add_rows(Var a, std::vector<std::size_t> ra, Var b,
               std::vector<std::size_t> rb);
  Var div(Var a, Var b_scalar);  // any shape / scalar

  // Scalar-argument composites used all over the models.
  Var cosine(Var a, Var b);  // vectors with nonzero norm

  // Seeds d(loss)/d(loss) = 1 and accumulates into every node's grad.
  // loss must be scalar. May be called once per tape.
  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  double scalar_value(Var v) const { return nodes_[v.id].value[0]; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, const Node&)> backprop;  // null for leaves
  };

  Var push(Tensor value, std::function<void(Tape&, const Node&)> backprop);
  Tensor& grad_of(std::size_t id) { return nodes_[id].grad; }
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace kgdialog::neural
