#include "frisbi/ot/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "frisbi/error.hpp"

namespace frisbi::ot {

namespace {

// P_i. = (1/n) softmax_j((v_j - C_ij)/gamma); v = nullptr means v = 0.
void row_softmax_plan(const numeric::Matrix& cost, double gamma, const std::vector<double>* v,
                      numeric::Matrix& plan) {
  const std::size_t n = cost.rows(), m = cost.cols();
  std::vector<double> logits(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j)
      logits[j] = ((v ? (*v)[j] : 0.0) - cost(i, j)) / gamma;
    const double lse = numeric::logsumexp(logits);
    for (std::size_t j = 0; j < m; ++j)
      plan(i, j) = std::exp(logits[j] - lse) / static_cast<double>(n);
  }
}

}  // namespace

TransportPlan closed_form_plan(const numeric::Matrix& cost, double gamma) {
  if (gamma <= 0.0) throw Error("bad-gamma", "entropy weight must be > 0");
  if (!cost.all_finite()) throw Error("bad-cost", "cost matrix must be finite");
  TransportPlan out;
  out.p = numeric::Matrix(cost.rows(), cost.cols());
  row_softmax_plan(cost, gamma, nullptr, out.p);
  out.iterations = 1;
  return out;
}

TransportPlan semibalanced_solve(const numeric::Matrix& cost, const OtParams& params,
                                 std::vector<double>* objective_trace) {
  if (params.gamma <= 0.0) throw Error("bad-gamma", "entropy weight must be > 0");
  if (params.rho < 0.0) throw Error("bad-rho", "column relaxation weight must be >= 0");
  if (!cost.all_finite()) throw Error("bad-cost", "cost matrix must be finite");

  const std::size_t n = cost.rows(), m = cost.cols();
  const double kappa = params.rho / (params.rho + params.gamma);
  const double log_b = -std::log(static_cast<double>(m));

  TransportPlan out;
  out.p = numeric::Matrix(n, m, 1.0 / static_cast<double>(n * m));
  out.converged = false;
  numeric::Matrix next(n, m);
  std::vector<double> v(m, 0.0), colmass(m);
  if (objective_trace)
    objective_trace->assign(1, plan_objective(out.p, cost, params.gamma, params.rho));

  for (std::size_t t = 1; t <= params.max_iter; ++t) {
    std::fill(colmass.begin(), colmass.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) colmass[j] += out.p(i, j);
    for (std::size_t j = 0; j < m; ++j) {
      const double log_c = std::log(std::max(colmass[j], 1e-300));
      v[j] = kappa * (v[j] + params.gamma * (log_b - log_c));
    }
    row_softmax_plan(cost, params.gamma, &v, next);
    const double delta = numeric::max_abs_diff(next, out.p);
    std::swap(out.p, next);
    out.iterations = t;
    if (objective_trace)
      objective_trace->push_back(plan_objective(out.p, cost, params.gamma, params.rho));
    if (delta < params.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

TransportPlan sinkhorn_balanced(const numeric::Matrix& cost, double gamma, std::size_t max_iter,
                                double tol) {
  if (gamma <= 0.0) throw Error("bad-gamma", "entropy weight must be > 0");
  if (!cost.all_finite()) throw Error("bad-cost", "cost matrix must be finite");
  const std::size_t n = cost.rows(), m = cost.cols();
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);

  // Epsilon scaling: anneal the entropy weight from a coarse level down to
  // gamma, carrying the dual potentials across stages. Peaked kernels (gamma
  // much smaller than the cost spread) otherwise need tens of thousands of
  // iterations.
  double c_min = cost.flat()[0], c_max = cost.flat()[0];
  for (double v : cost.flat()) {
    c_min = std::min(c_min, v);
    c_max = std::max(c_max, v);
  }
  std::vector<double> schedule;
  for (double g = std::max(gamma, (c_max - c_min) / 16.0); g > gamma; g *= 0.5)
    schedule.push_back(g);
  schedule.push_back(gamma);

  std::vector<double> f(n, 0.0), g_pot(m, 0.0), row_shift(n), u(n, 1.0), vv(m, 1.0), ktu(m);
  numeric::Matrix kernel(n, m);
  TransportPlan out;
  out.converged = false;
  std::size_t total_iters = 0;

  auto build_kernel = [&](double stage_gamma) {
    for (std::size_t i = 0; i < n; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j)
        top = std::max(top, f[i] + g_pot[j] - cost(i, j));
      row_shift[i] = top;
      for (std::size_t j = 0; j < m; ++j)
        kernel(i, j) = std::exp((f[i] + g_pot[j] - cost(i, j) - top) / stage_gamma);
    }
    std::fill(u.begin(), u.end(), 1.0);
    std::fill(vv.begin(), vv.end(), 1.0);
  };
  auto absorb = [&](double stage_gamma) {
    for (std::size_t i = 0; i < n; ++i) f[i] += stage_gamma * std::log(u[i]) - row_shift[i];
    for (std::size_t j = 0; j < m; ++j) g_pot[j] += stage_gamma * std::log(vv[j]);
  };

  for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
    const double stage_gamma = schedule[stage];
    const bool last = stage + 1 == schedule.size();
    const double stage_tol = last ? tol : std::max(tol, 1e-2 * b);
    build_kernel(stage_gamma);
    bool stage_done = false;
    while (total_iters < max_iter && !stage_done) {
      ++total_iters;
      // u = a ./ (K v), Eigen-backed matvec
      numeric::Matrix kv(n, 1, 0.0);
      add_gemm(kv, kernel, numeric::Matrix::column_vector(vv), false, false, 1.0);
      for (std::size_t i = 0; i < n; ++i) u[i] = a / kv(i, 0);
      numeric::Matrix ktu_m(m, 1, 0.0);
      add_gemm(ktu_m, kernel, numeric::Matrix::column_vector(u), true, false, 1.0);
      double worst = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        worst = std::max(worst, std::abs(vv[j] * ktu_m(j, 0) - b));
        vv[j] = b / ktu_m(j, 0);
      }
      if (worst < stage_tol) stage_done = true;
      double extreme = 0.0;
      for (double x : u) extreme = std::max(extreme, std::abs(std::log(x)));
      for (double x : vv) extreme = std::max(extreme, std::abs(std::log(x)));
      if (extreme > 200.0 && !stage_done) {
        absorb(stage_gamma);
        build_kernel(stage_gamma);
      }
    }
    if (last) out.converged = stage_done;
    absorb(stage_gamma);
  }
  out.iterations = total_iters;

  // Plan from the final potentials, row-shifted against overflow; the closing
  // row projection makes row marginals exact.
  out.p = numeric::Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) top = std::max(top, f[i] + g_pot[j] - cost(i, j));
    double row_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double p = std::exp((f[i] + g_pot[j] - cost(i, j) - top) / gamma);
      out.p(i, j) = p;
      row_sum += p;
    }
    const double scale = a / row_sum;
    for (std::size_t j = 0; j < m; ++j) out.p(i, j) *= scale;
  }
  return out;
}

std::vector<double> mixture_weights(std::span<const double> z, const numeric::Matrix& atlas,
                                    double gamma) {
  if (gamma <= 0.0) throw Error("bad-gamma", "entropy weight must be > 0");
  if (atlas.rows() == 0) throw Error("empty-atlas", "mixture_weights needs at least one atom");
  if (z.size() != atlas.cols()) throw Error("shape", "embedding width mismatch");
  const std::size_t m = atlas.rows();
  std::vector<double> logits(m);
  for (std::size_t j = 0; j < m; ++j) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double diff = z[k] - atlas(j, k);
      d2 += diff * diff;
    }
    logits[j] = -d2 / gamma;
  }
  const double lse = numeric::logsumexp(logits);
  std::vector<double> alpha(m);
  for (std::size_t j = 0; j < m; ++j) alpha[j] = std::exp(logits[j] - lse);
  return alpha;
}

double plan_entropy(const numeric::Matrix& p) {
  double h = 0.0;
  for (double x : p.flat())
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

double plan_objective(const numeric::Matrix& p, const numeric::Matrix& cost, double gamma,
                      double rho) {
  const std::size_t n = p.rows(), m = p.cols();
  double linear = 0.0;
  for (std::size_t i = 0; i < n * m; ++i) linear += p.flat()[i] * cost.flat()[i];
  double kl = 0.0;
  if (rho > 0.0) {
    const double b = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < m; ++j) {
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i) c += p(i, j);
      if (c > 0.0) kl += c * std::log(c / b);
      kl += b - c;
    }
  }
  return linear + rho * kl - gamma * plan_entropy(p);
}

}  // namespace frisbi::ot
