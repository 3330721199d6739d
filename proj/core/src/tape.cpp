#include "frisbi/numeric/tape.hpp"

#include <cmath>
#include <utility>

#include "frisbi/error.hpp"

namespace frisbi::numeric {

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size())
    n.grad = Matrix(n.value.rows(), n.value.cols(), 0.0);
  return n.grad;
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() != n.value.size())
    throw Error("no-grad", "gradient not populated; call backward() first");
  return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(const Matrix& value) { return push(value, true, nullptr); }

Var Tape::matmul(Var a, Var b) {
  Matrix out = numeric::matmul(value(a), value(b));
  std::size_t ia = a.id, ib = b.id;
  Var v = push(std::move(out), wants_grad(a) || wants_grad(b), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia, ib](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad)
      add_gemm(t.grad_buffer(ia), g, t.nodes_[ib].value, false, true, 1.0);  // dA += G B^T
    if (t.nodes_[ib].requires_grad)
      add_gemm(t.grad_buffer(ib), t.nodes_[ia].value, g, true, false, 1.0);  // dB += A^T G
  };
  return v;
}

Var Tape::add(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (!va.same_shape(vb)) throw Error("shape", "add shape mismatch");
  Matrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] += vb.flat()[i];
  std::size_t ia = a.id, ib = b.id;
  Var v = push(std::move(out), wants_grad(a) || wants_grad(b), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia, ib](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad) {
      Matrix& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da.flat()[i] += g.flat()[i];
    }
    if (t.nodes_[ib].requires_grad) {
      Matrix& db = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) db.flat()[i] += g.flat()[i];
    }
  };
  return v;
}

Var Tape::sub(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (!va.same_shape(vb)) throw Error("shape", "sub shape mismatch");
  Matrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] -= vb.flat()[i];
  std::size_t ia = a.id, ib = b.id;
  Var v = push(std::move(out), wants_grad(a) || wants_grad(b), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia, ib](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad) {
      Matrix& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da.flat()[i] += g.flat()[i];
    }
    if (t.nodes_[ib].requires_grad) {
      Matrix& db = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) db.flat()[i] -= g.flat()[i];
    }
  };
  return v;
}

Var Tape::mul(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (!va.same_shape(vb)) throw Error("shape", "mul shape mismatch");
  Matrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] *= vb.flat()[i];
  std::size_t ia = a.id, ib = b.id;
  Var v = push(std::move(out), wants_grad(a) || wants_grad(b), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia, ib](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& va2 = t.nodes_[ia].value;
    const Matrix& vb2 = t.nodes_[ib].value;
    if (t.nodes_[ia].requires_grad) {
      Matrix& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da.flat()[i] += g.flat()[i] * vb2.flat()[i];
    }
    if (t.nodes_[ib].requires_grad) {
      Matrix& db = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) db.flat()[i] += g.flat()[i] * va2.flat()[i];
    }
  };
  return v;
}

Var Tape::add_row_broadcast(Var a, Var bias) {
  const Matrix& va = value(a);
  const Matrix& vb = value(bias);
  if (vb.rows() != 1 || vb.cols() != va.cols())
    throw Error("shape", "add_row_broadcast bias must be 1 x cols(a)");
  Matrix out = va;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += vb(0, j);
  std::size_t ia = a.id, ib = bias.id;
  Var v = push(std::move(out), wants_grad(a) || wants_grad(bias), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia, ib](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad) {
      Matrix& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da.flat()[i] += g.flat()[i];
    }
    if (t.nodes_[ib].requires_grad) {
      Matrix& db = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
    }
  };
  return v;
}

Var Tape::relu(Var a) {
  Matrix out = value(a);
  for (double& x : out.flat())
    if (x < 0.0) x = 0.0;
  std::size_t ia = a.id;
  Var v = push(std::move(out), wants_grad(a), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& x = t.nodes_[ia].value;
    Matrix& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.flat()[i] > 0.0) da.flat()[i] += g.flat()[i];
  };
  return v;
}

Var Tape::tanh_act(Var a) {
  Matrix out = value(a);
  for (double& x : out.flat()) x = std::tanh(x);
  std::size_t ia = a.id;
  Var v = push(std::move(out), wants_grad(a), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value;
    Matrix& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      da.flat()[i] += g.flat()[i] * (1.0 - y.flat()[i] * y.flat()[i]);
  };
  return v;
}

Var Tape::exp_elem(Var a) {
  Matrix out = value(a);
  for (double& x : out.flat()) x = std::exp(x);
  std::size_t ia = a.id;
  Var v = push(std::move(out), wants_grad(a), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value;
    Matrix& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) da.flat()[i] += g.flat()[i] * y.flat()[i];
  };
  return v;
}

Var Tape::log_elem(Var a) {
  Matrix out = value(a);
  for (double& x : out.flat()) x = std::log(x);
  std::size_t ia = a.id;
  Var v = push(std::move(out), wants_grad(a), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& x = t.nodes_[ia].value;
    Matrix& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) da.flat()[i] += g.flat()[i] / x.flat()[i];
  };
  return v;
}

Var Tape::affine(Var a, double scale, double offset) {
  Matrix out = value(a);
  for (double& x : out.flat()) x = scale * x + offset;
  std::size_t ia = a.id;
  Var v = push(std::move(out), wants_grad(a), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia, scale](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Matrix& g = t.nodes_[self].grad;
    Matrix& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) da.flat()[i] += scale * g.flat()[i];
  };
  return v;
}

Var Tape::column(Var a, std::size_t j) {
  const Matrix& va = value(a);
  if (j >= va.cols()) throw Error("shape", "column index out of range");
  Matrix out(va.rows(), 1);
  for (std::size_t i = 0; i < va.rows(); ++i) out(i, 0) = va(i, j);
  std::size_t ia = a.id;
  Var v = push(std::move(out), wants_grad(a), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia, j](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Matrix& g = t.nodes_[self].grad;
    Matrix& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.rows(); ++i) da(i, j) += g(i, 0);
  };
  return v;
}

Var Tape::hstack2(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows() != vb.rows()) throw Error("shape", "hstack2 row mismatch");
  Matrix out(va.rows(), va.cols() + vb.cols());
  for (std::size_t i = 0; i < va.rows(); ++i) {
    for (std::size_t j = 0; j < va.cols(); ++j) out(i, j) = va(i, j);
    for (std::size_t j = 0; j < vb.cols(); ++j) out(i, va.cols() + j) = vb(i, j);
  }
  std::size_t ia = a.id, ib = b.id, ca = va.cols();
  Var v = push(std::move(out), wants_grad(a) || wants_grad(b), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia, ib, ca](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad) {
      Matrix& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < da.rows(); ++i)
        for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += g(i, j);
    }
    if (t.nodes_[ib].requires_grad) {
      Matrix& db = t.grad_buffer(ib);
      for (std::size_t i = 0; i < db.rows(); ++i)
        for (std::size_t j = 0; j < db.cols(); ++j) db(i, j) += g(i, ca + j);
    }
  };
  return v;
}

Var Tape::row_sum(Var a) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), 1, 0.0);
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t j = 0; j < va.cols(); ++j) out(i, 0) += va(i, j);
  std::size_t ia = a.id;
  Var v = push(std::move(out), wants_grad(a), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Matrix& g = t.nodes_[self].grad;
    Matrix& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < da.rows(); ++i)
      for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += g(i, 0);
  };
  return v;
}

Var Tape::sum_all(Var a) {
  const Matrix& va = value(a);
  Matrix out(1, 1, 0.0);
  for (double x : va.flat()) out(0, 0) += x;
  std::size_t ia = a.id;
  Var v = push(std::move(out), wants_grad(a), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const double g = t.nodes_[self].grad(0, 0);
    Matrix& da = t.grad_buffer(ia);
    for (double& x : da.flat()) x += g;
  };
  return v;
}

Var Tape::mean_all(Var a) {
  const std::size_t n = value(a).size();
  return affine(sum_all(a), 1.0 / static_cast<double>(n), 0.0);
}

Var Tape::dot(Var a, Var w) {
  const Matrix& va = value(a);
  const Matrix& vw = value(w);
  if (!va.same_shape(vw)) throw Error("shape", "dot shape mismatch");
  Matrix out(1, 1, 0.0);
  for (std::size_t i = 0; i < va.size(); ++i) out(0, 0) += va.flat()[i] * vw.flat()[i];
  std::size_t ia = a.id, iw = w.id;
  Var v = push(std::move(out), wants_grad(a) || wants_grad(w), nullptr);
  std::size_t self = v.id;
  nodes_[self].backprop = [self, ia, iw](Tape& t) {
    const double g = t.nodes_[self].grad(0, 0);
    const Matrix& va2 = t.nodes_[ia].value;
    const Matrix& vw2 = t.nodes_[iw].value;
    if (t.nodes_[ia].requires_grad) {
      Matrix& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < da.size(); ++i) da.flat()[i] += g * vw2.flat()[i];
    }
    if (t.nodes_[iw].requires_grad) {
      Matrix& dw = t.grad_buffer(iw);
      for (std::size_t i = 0; i < dw.size(); ++i) dw.flat()[i] += g * va2.flat()[i];
    }
  };
  return v;
}

Var Tape::sqdist_to(Var a, Var w) {
  Matrix out = pairwise_sqdist(value(a), value(w));
  std::size_t ia = a.id, iw = w.id;
  Var v = push(std::move(out), wants_grad(a) || wants_grad(w), nullptr);
  std::size_t self = v.id;
  // dA_ik = sum_j G_ij * 2 (A_ik - W_jk) = 2 (A_ik * rowsum(G)_i - (G W)_ik)
  nodes_[self].backprop = [self, ia, iw](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& va = t.nodes_[ia].value;
    const Matrix& vw = t.nodes_[iw].value;
    if (t.nodes_[ia].requires_grad) {
      Matrix& da = t.grad_buffer(ia);
      std::vector<double> rs(g.rows(), 0.0);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) rs[i] += g(i, j);
      Matrix gw(g.rows(), vw.cols(), 0.0);
      add_gemm(gw, g, vw, false, false, 1.0);
      for (std::size_t i = 0; i < da.rows(); ++i)
        for (std::size_t k = 0; k < da.cols(); ++k)
          da(i, k) += 2.0 * (va(i, k) * rs[i] - gw(i, k));
    }
    if (t.nodes_[iw].requires_grad) {
      Matrix& dw = t.grad_buffer(iw);
      std::vector<double> cs(g.cols(), 0.0);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) cs[j] += g(i, j);
      Matrix gta(g.cols(), va.cols(), 0.0);
      add_gemm(gta, g, va, true, false, 1.0);
      for (std::size_t j = 0; j < dw.rows(); ++j)
        for (std::size_t k = 0; k < dw.cols(); ++k)
          dw(j, k) += 2.0 * (vw(j, k) * cs[j] - gta(j, k));
    }
  };
  return v;
}

void Tape::backward(Var loss) {
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw Error("non-scalar-loss", "backward requires a 1x1 loss node");
  grad_buffer(loss.id)(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backprop) continue;
    if (n.grad.size() != n.value.size()) continue;  // never touched by downstream
    n.backprop(*this);
  }
}

}  // namespace frisbi::numeric
