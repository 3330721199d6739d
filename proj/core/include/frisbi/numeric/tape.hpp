#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "frisbi/numeric/matrix.hpp"

namespace frisbi::numeric {

/// Handle to a tape node.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode gradient tape over Matrix-valued nodes. A fresh tape is built
/// per optimizer step: register leaves/constants, compose ops, call
/// backward() on a 1x1 loss, read grad() of the leaves.
///
/// Ops only reference earlier nodes, so creation order is a topological order
/// and backward() is a single reverse sweep.
class Tape {
 public:
  Var constant(Matrix value);          // no gradient tracked
  Var leaf(const Matrix& value);       // parameter; gradient accumulated

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);               // same shape
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);               // elementwise
  Var add_row_broadcast(Var a, Var bias);  // a: n x k, bias: 1 x k
  Var relu(Var a);
  Var tanh_act(Var a);
  Var exp_elem(Var a);
  Var log_elem(Var a);
  Var affine(Var a, double scale, double offset);  // scale*a + offset, elementwise
  Var column(Var a, std::size_t j);    // n x k -> n x 1
  Var hstack2(Var a, Var b);
  Var row_sum(Var a);                  // n x k -> n x 1
  Var sum_all(Var a);                  // -> 1 x 1
  Var mean_all(Var a);                 // -> 1 x 1
  /// Frobenius inner product with a constant/same-shape node: sum(a .* w) -> 1 x 1.
  Var dot(Var a, Var w);
  /// Squared-distance cost block: rows of a vs rows of w -> n x m.
  Var sqdist_to(Var a, Var w);

  /// Seeds d(loss)/d(loss) = 1 and sweeps. Throws Error("non-scalar-loss")
  /// unless loss is 1x1.
  void backward(Var loss);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;  // pulls own grad, pushes to parents
  };

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&)> backprop);
  Matrix& grad_buffer(std::size_t id);
  bool wants_grad(Var v) const { return nodes_[v.id].requires_grad; }

  std::vector<Node> nodes_;
};

}  // namespace frisbi::numeric
