#include <doctest.h>

#include <cmath>
#include <vector>

#include "frisbi/error.hpp"
#include "frisbi/numeric/rng.hpp"
#include "frisbi/ot/ot.hpp"
#include "oracles.hpp"

using namespace frisbi;
using numeric::Matrix;
using numeric::RngStream;

namespace {

Matrix random_cost(std::size_t n, std::size_t m, RngStream& rng, double hi = 2.0) {
  Matrix c(n, m);
  for (double& v : c.flat()) v = rng.uniform(0.0, hi);
  return c;
}

double row_sum(const Matrix& p, std::size_t i) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.cols(); ++j) s += p(i, j);
  return s;
}

double col_sum(const Matrix& p, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) s += p(i, j);
  return s;
}

}  // namespace

TEST_CASE("closed form: uniform, hand value, hard limit") {
  Matrix zero(2, 3, 0.0);
  auto plan = ot::closed_form_plan(zero, 0.5);
  for (double v : plan.p.flat()) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

  Matrix c = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
  auto p2 = ot::closed_form_plan(c, 1.0);
  // 0.5 * e^0 / (e^0 + e^-1) etc.
  const double big = 0.5 / (1.0 + std::exp(-1.0));
  CHECK(p2.p(0, 0) == doctest::Approx(big).epsilon(1e-12));
  CHECK(p2.p(0, 0) == doctest::Approx(0.365529).epsilon(1e-5));
  CHECK(p2.p(0, 1) == doctest::Approx(0.134471).epsilon(1e-5));
  CHECK(p2.p(1, 0) == doctest::Approx(0.134471).epsilon(1e-5));

  auto hard = ot::closed_form_plan(c, 1e-6);
  CHECK(std::abs(hard.p(0, 0) - 0.5) < 1e-12);
  CHECK(std::abs(hard.p(0, 1)) < 1e-12);
  CHECK(std::abs(hard.p(1, 0)) < 1e-12);
  CHECK(std::abs(hard.p(1, 1) - 0.5) < 1e-12);

  CHECK_THROWS_WITH_AS(ot::closed_form_plan(c, 0.0), doctest::Contains("bad-gamma"), Error);
}

TEST_CASE("closed form: exact row marginals and row decomposability") {
  RngStream rng(1, numeric::StreamId::kTest);
  Matrix c = random_cost(9, 13, rng);
  auto plan = ot::closed_form_plan(c, 0.7);
  for (std::size_t i = 0; i < 9; ++i)
    CHECK(std::abs(row_sum(plan.p, i) - 1.0 / 9.0) < 1e-14);

  // computing one row alone gives the same row (up to the 1/n factor)
  for (std::size_t i = 0; i < 9; ++i) {
    Matrix single(1, 13);
    for (std::size_t j = 0; j < 13; ++j) single(0, j) = c(i, j);
    auto row_plan = ot::closed_form_plan(single, 0.7);
    for (std::size_t j = 0; j < 13; ++j)
      CHECK(std::abs(row_plan.p(0, j) - 9.0 * plan.p(i, j) / 1.0) < 1e-14);
  }
}

TEST_CASE("semibalanced rho=0 equals the closed form after one update") {
  RngStream rng(2, numeric::StreamId::kTest);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix c = random_cost(6, 9, rng);
    ot::OtParams params;
    params.gamma = 0.5;
    params.rho = 0.0;
    auto iterative = ot::semibalanced_solve(c, params);
    auto closed = ot::closed_form_plan(c, 0.5);
    CHECK(iterative.converged);
    CHECK(iterative.iterations <= 2);  // one update plus the verification pass
    CHECK(numeric::max_abs_diff(iterative.p, closed.p) < 1e-12);
  }
}

TEST_CASE("semibalanced objective matches the projected-gradient oracle on 3x3") {
  RngStream rng(3, numeric::StreamId::kTest);
  for (double rho : {0.1, 1.0, 10.0}) {
    for (int trial = 0; trial < 3; ++trial) {
      Matrix c = random_cost(3, 3, rng);
      ot::OtParams params;
      params.gamma = 0.5;
      params.rho = rho;
      params.tol = 1e-12;
      auto plan = ot::semibalanced_solve(c, params);
      CHECK(plan.converged);
      const double solver_obj = ot::plan_objective(plan.p, c, params.gamma, rho);
      const double oracle_obj = oracles::pgd_semibalanced_objective(c, params.gamma, rho);
      CHECK(solver_obj == doctest::Approx(oracle_obj).epsilon(1e-6));
      CHECK(solver_obj <= oracle_obj + 1e-6);
    }
  }
}

TEST_CASE("semibalanced objective trace decreases on the studied regimes") {
  RngStream rng(4, numeric::StreamId::kTest);
  for (double rho : {0.1, 1.0, 10.0}) {
    Matrix c = random_cost(5, 7, rng);
    ot::OtParams params;
    params.gamma = 0.5;
    params.rho = rho;
    std::vector<double> trace;
    auto plan = ot::semibalanced_solve(c, params, &trace);
    CHECK(plan.converged);
    REQUIRE(trace.size() >= 2);
    for (std::size_t t = 1; t + 1 < trace.size(); ++t)
      CHECK(trace[t + 1] <= trace[t] + 1e-9 * (1.0 + std::abs(trace[t])));
  }
}

TEST_CASE("semibalanced with huge rho approaches balanced marginals") {
  RngStream rng(5, numeric::StreamId::kTest);
  Matrix c = random_cost(16, 32, rng);
  ot::OtParams params;
  params.gamma = 0.5;
  params.rho = 1e6;
  auto plan = ot::semibalanced_solve(c, params);
  for (std::size_t j = 0; j < 32; ++j)
    CHECK(std::abs(col_sum(plan.p, j) - 1.0 / 32.0) < 1e-3);
}

TEST_CASE("sinkhorn balanced: symmetric fixed point and uniform on zero cost") {
  Matrix c = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
  auto plan = ot::sinkhorn_balanced(c, 1.0);
  CHECK(plan.converged);
  CHECK(plan.p(0, 0) == doctest::Approx(0.365529).epsilon(1e-5));
  CHECK(plan.p(0, 1) == doctest::Approx(0.134471).epsilon(1e-5));

  Matrix zero(3, 4, 0.0);
  auto uniform = ot::sinkhorn_balanced(zero, 0.5);
  for (double v : uniform.p.flat()) CHECK(v == doctest::Approx(1.0 / 12.0).epsilon(1e-10));
}

TEST_CASE("sinkhorn marginals and rho->inf consistency with semibalanced") {
  RngStream rng(6, numeric::StreamId::kTest);
  Matrix c = random_cost(8, 8, rng);
  auto sink = ot::sinkhorn_balanced(c, 0.5, 20000, 1e-12);
  CHECK(sink.converged);
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(row_sum(sink.p, i) - 0.125) < 1e-14);
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(col_sum(sink.p, j) - 0.125) < 1e-9);

  ot::OtParams params;
  params.gamma = 0.5;
  params.rho = 1e6;
  params.tol = 1e-12;
  auto semi = ot::semibalanced_solve(c, params);
  double kl = 0.0;
  for (std::size_t i = 0; i < semi.p.size(); ++i) {
    const double p = semi.p.flat()[i], q = sink.p.flat()[i];
    if (p > 0.0) kl += p * std::log(p / q);
  }
  CHECK(kl < 1e-4);
}

TEST_CASE("entropy is monotone in gamma") {
  RngStream rng(7, numeric::StreamId::kTest);
  Matrix c = random_cost(6, 10, rng);
  double last = -1e300;
  for (double gamma : {0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0}) {
    const double h = ot::plan_entropy(ot::closed_form_plan(c, gamma).p);
    CHECK(h >= last - 1e-12);
    last = h;
  }
}

TEST_CASE("soft-min identity per row") {
  RngStream rng(8, numeric::StreamId::kTest);
  Matrix c = random_cost(5, 9, rng);
  const double gamma = 0.5;
  auto plan = ot::closed_form_plan(c, gamma);
  for (std::size_t i = 0; i < 5; ++i) {
    // s = normalized row (softmax); sum_j s_j C_ij + gamma s_j log s_j
    double value = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      const double s = plan.p(i, j) * 5.0;
      if (s > 0.0) value += s * c(i, j) + gamma * s * std::log(s);
    }
    std::vector<double> logits(9);
    for (std::size_t j = 0; j < 9; ++j) logits[j] = -c(i, j) / gamma;
    const double soft_min = -gamma * numeric::logsumexp(logits);
    CHECK(std::abs(value - soft_min) < 1e-10);
  }
}

TEST_CASE("mixture weights: symmetry, concentration, plan-row equality") {
  Matrix atlas = Matrix::from_rows({{0.0, 0.0}, {2.0, 0.0}});
  std::vector<double> z{1.0, 0.0};  // equidistant
  auto alpha = ot::mixture_weights(z, atlas, 0.5);
  CHECK(alpha[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(alpha[1] == doctest::Approx(0.5).epsilon(1e-14));

  // z on the first atom, the other atom at squared distance 10
  Matrix atlas2 = Matrix::from_rows({{0.0, 0.0}, {std::sqrt(10.0), 0.0}});
  std::vector<double> z2{0.0, 0.0};
  auto alpha2 = ot::mixture_weights(z2, atlas2, 0.5);
  CHECK(alpha2[0] == doctest::Approx(1.0 / (1.0 + std::exp(-20.0))).epsilon(1e-12));

  // equals an appended row of the closed-form plan
  RngStream rng(9, numeric::StreamId::kTest);
  Matrix emb(4, 3), big_atlas(6, 3);
  for (double& v : emb.flat()) v = rng.uniform(-1.0, 1.0);
  for (double& v : big_atlas.flat()) v = rng.uniform(-1.0, 1.0);
  std::vector<double> z3{0.3, -0.2, 0.8};
  Matrix stacked = numeric::stack_rows(emb, Matrix::row_vector(z3));
  auto plan = ot::closed_form_plan(numeric::pairwise_sqdist(stacked, big_atlas), 0.5);
  auto direct = ot::mixture_weights(z3, big_atlas, 0.5);
  double sum = 0.0;
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(std::abs(direct[j] - 5.0 * plan.p(4, j)) < 1e-14);
    sum += direct[j];
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);

  Matrix empty(0, 3);
  CHECK_THROWS_WITH_AS(ot::mixture_weights(z3, empty, 0.5), doctest::Contains("empty-atlas"),
                       Error);
}
