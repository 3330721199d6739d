#include <doctest.h>

#include <cmath>
#include <vector>

#include "frisbi/error.hpp"
#include "frisbi/numeric/matrix.hpp"
#include "frisbi/numeric/rng.hpp"
#include "frisbi/numeric/tape.hpp"
#include "oracles.hpp"

using namespace frisbi;
using numeric::Matrix;
using numeric::RngStream;
using numeric::Tape;
using numeric::Var;

TEST_CASE("logsumexp basics") {
  CHECK(numeric::logsumexp(std::vector<double>{0.0, 0.0}) == doctest::Approx(std::log(2.0)));
  CHECK(numeric::logsumexp(std::vector<double>{3.25}) == doctest::Approx(3.25).epsilon(1e-15));
  // max-shift identity, verified against exact arithmetic at small scale
  const double small = numeric::logsumexp(std::vector<double>{0.0, 0.0});
  CHECK(numeric::logsumexp(std::vector<double>{1000.0, 1000.0}) ==
        doctest::Approx(1000.0 + small).epsilon(1e-15));
  CHECK_THROWS_WITH_AS(numeric::logsumexp(std::vector<double>{}),
                       doctest::Contains("empty-vector"), Error);
}

TEST_CASE("logsumexp bounds property") {
  RngStream rng(1, numeric::StreamId::kTest);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> v(n);
    double vmax = -1e300;
    for (double& x : v) {
      x = rng.uniform(-50.0, 50.0);
      vmax = std::max(vmax, x);
    }
    const double lse = numeric::logsumexp(v);
    CHECK(lse >= vmax);
    CHECK(lse <= vmax + std::log(static_cast<double>(n)) + 1e-12);
  }
}

TEST_CASE("pairwise_sqdist examples and symmetry") {
  Matrix a = Matrix::from_rows({{0.0, 0.0}});
  Matrix b = Matrix::from_rows({{3.0, 4.0}});
  CHECK(numeric::pairwise_sqdist(a, b)(0, 0) == doctest::Approx(25.0).epsilon(1e-15));

  Matrix c = Matrix::from_rows({{1.0}, {2.0}});
  Matrix d = Matrix::from_rows({{0.0}, {4.0}});
  Matrix cd = numeric::pairwise_sqdist(c, d);
  CHECK(cd(0, 0) == 1.0);
  CHECK(cd(0, 1) == 9.0);
  CHECK(cd(1, 0) == 4.0);
  CHECK(cd(1, 1) == 4.0);

  RngStream rng(2, numeric::StreamId::kTest);
  Matrix x(5, 3), y(4, 3);
  for (double& v : x.flat()) v = rng.uniform(-2.0, 2.0);
  for (double& v : y.flat()) v = rng.uniform(-2.0, 2.0);
  // zero diagonal on identical inputs, exactly
  Matrix xx = numeric::pairwise_sqdist(x, x);
  for (std::size_t i = 0; i < 5; ++i) CHECK(xx(i, i) == 0.0);
  // symmetry C(A,B) = C(B,A)^T
  Matrix xy = numeric::pairwise_sqdist(x, y);
  Matrix yx = numeric::pairwise_sqdist(y, x);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(xy(i, j) == yx(j, i));

  Matrix bad(2, 7);
  CHECK_THROWS_WITH_AS(numeric::pairwise_sqdist(x, bad), doctest::Contains("shape"), Error);
}

TEST_CASE("rng streams are deterministic and purpose-independent") {
  RngStream a(42, numeric::StreamId::kSimSbi);
  RngStream b(42, numeric::StreamId::kSimSbi);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c(42, numeric::StreamId::kSimUnpaired);
  bool any_diff = false;
  RngStream a2(42, numeric::StreamId::kSimSbi);
  for (int i = 0; i < 10; ++i) any_diff = any_diff || (a2.next_u64() != c.next_u64());
  CHECK(any_diff);

  RngStream f1 = a.fork(7);
  RngStream f2 = b.fork(7);
  CHECK(f1.next_u64() == f2.next_u64());
}

TEST_CASE("rng uniform and normal moments") {
  RngStream rng(11, numeric::StreamId::kTest);
  double mean = 0.0, var = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    mean += x;
    var += x * x;
  }
  mean /= n;
  var = var / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("tape: scalar square and softmax-style gradients") {
  // loss = p^2 at p = 3 -> d/dp = 6
  Tape tape;
  Var p = tape.leaf(Matrix(1, 1, 3.0));
  Var loss = tape.mul(p, p);
  tape.backward(loss);
  CHECK(tape.grad(p)(0, 0) == doctest::Approx(6.0).epsilon(1e-15));

  // loss = logsumexp([p, 0]) at p = 0 -> d/dp = 0.5
  Tape t2;
  Var q = t2.leaf(Matrix(1, 1, 0.0));
  Var stacked = t2.hstack2(q, t2.constant(Matrix(1, 1, 0.0)));
  Var lse = t2.log_elem(t2.row_sum(t2.exp_elem(stacked)));
  t2.backward(lse);
  CHECK(t2.grad(q)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tape: non-scalar loss rejected") {
  Tape tape;
  Var p = tape.leaf(Matrix(2, 2, 1.0));
  CHECK_THROWS_WITH_AS(tape.backward(p), doctest::Contains("non-scalar-loss"), Error);
}

TEST_CASE("tape: MLP-style loss matches central finite differences") {
  RngStream rng(5, numeric::StreamId::kTest);
  // two-layer net with relu/tanh mix, squared-norm loss
  std::vector<Matrix> params;
  params.emplace_back(4, 8);
  params.emplace_back(1, 8);
  params.emplace_back(8, 3);
  params.emplace_back(1, 3);
  for (auto& m : params)
    for (double& v : m.flat()) v = rng.uniform(-0.7, 0.7);
  Matrix x(6, 4);
  for (double& v : x.flat()) v = rng.uniform(-1.0, 1.0);

  auto loss_fn = [&x](const std::vector<Matrix>& ps) {
    Tape tape;
    Var w1 = tape.leaf(ps[0]);
    Var b1 = tape.leaf(ps[1]);
    Var w2 = tape.leaf(ps[2]);
    Var b2 = tape.leaf(ps[3]);
    Var h = tape.relu(tape.add_row_broadcast(tape.matmul(tape.constant(x), w1), b1));
    Var out = tape.tanh_act(tape.add_row_broadcast(tape.matmul(h, w2), b2));
    return tape.value(tape.mean_all(tape.mul(out, out)))(0, 0);
  };

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& m : params) leaves.push_back(tape.leaf(m));
  Var h = tape.relu(tape.add_row_broadcast(tape.matmul(tape.constant(x), leaves[0]), leaves[1]));
  Var out = tape.tanh_act(tape.add_row_broadcast(tape.matmul(h, leaves[2]), leaves[3]));
  Var loss = tape.mean_all(tape.mul(out, out));
  tape.backward(loss);
  std::vector<Matrix> grads;
  for (Var v : leaves) grads.push_back(tape.grad(v));

  auto report = oracles::finite_difference_check(params, loss_fn, grads, 1e-5, 1000);
  CHECK(report.checked >= params[0].size());
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("tape: sqdist_to and dot gradients vs finite differences") {
  RngStream rng(6, numeric::StreamId::kTest);
  Matrix w(5, 3), weight(4, 5);
  for (double& v : w.flat()) v = rng.uniform(-1.0, 1.0);
  for (double& v : weight.flat()) v = rng.uniform(0.0, 1.0);
  std::vector<Matrix> params;
  params.emplace_back(4, 3);
  for (double& v : params[0].flat()) v = rng.uniform(-1.0, 1.0);

  auto loss_fn = [&](const std::vector<Matrix>& ps) {
    Tape tape;
    Var z = tape.leaf(ps[0]);
    Var c = tape.sqdist_to(z, tape.constant(w));
    return tape.value(tape.dot(c, tape.constant(weight)))(0, 0);
  };
  Tape tape;
  Var z = tape.leaf(params[0]);
  Var c = tape.sqdist_to(z, tape.constant(w));
  Var loss = tape.dot(c, tape.constant(weight));
  tape.backward(loss);
  std::vector<Matrix> grads{tape.grad(z)};
  auto report = oracles::finite_difference_check(params, loss_fn, grads, 1e-5, 1000);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("matrix helpers") {
  Matrix a = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  Matrix b = Matrix::from_rows({{5.0, 6.0}});
  Matrix s = numeric::stack_rows(a, b);
  CHECK(s.rows() == 3);
  CHECK(s(2, 1) == 6.0);
  std::vector<std::size_t> idx{2, 0};
  Matrix t = numeric::take_rows(s, idx);
  CHECK(t(0, 0) == 5.0);
  CHECK(t(1, 0) == 1.0);

  Matrix m = numeric::matmul(a, a.transposed());
  CHECK(m(0, 0) == doctest::Approx(5.0));
  CHECK(m(1, 0) == doctest::Approx(11.0));
}
