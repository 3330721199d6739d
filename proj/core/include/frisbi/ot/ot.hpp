#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "frisbi/numeric/matrix.hpp"

namespace frisbi::ot {

struct OtParams {
  double gamma = 0.5;     // entropy weight, > 0
  double rho = 0.0;       // column-KL relaxation weight, >= 0
  std::size_t max_iter = 10000;
  double tol = 1e-9;      // max-abs plan change between iterations
};

/// n x m coupling with exact row marginals 1/n.
struct TransportPlan {
  numeric::Matrix p;
  bool converged = true;
  std::size_t iterations = 0;
};

/// Row-wise closed form P_ij = (1/n) softmax_j(-C_ij / gamma), computed in
/// log space. Rows are independent, so a single fresh row can be computed on
/// its own — the basis of inductive inference.
TransportPlan closed_form_plan(const numeric::Matrix& cost, double gamma);

/// Semi-balanced entropic OT: exact row marginals, column marginals pulled
/// toward uniform by a KL penalty of weight rho.
///
/// Solved by damped block-dual ascent on the column potential,
///   v <- kappa (v + gamma log(b / colmass(P))),  kappa = rho / (rho + gamma),
/// followed by the exact row projection. The fixed point satisfies
/// v* = -rho log(m colmass*), i.e. the stationarity condition of the
/// objective; rho = 0 collapses to the closed form after one update and
/// rho -> inf approaches balanced Sinkhorn. Iteration starts from the
/// uniform plan.
///
/// On non-convergence the best plan is returned with converged = false.
/// objective_trace, when given, receives the objective after every update.
TransportPlan semibalanced_solve(const numeric::Matrix& cost, const OtParams& params,
                                 std::vector<double>* objective_trace = nullptr);

/// Balanced Sinkhorn between uniform marginals 1/n and 1/m (scaling form,
/// row-shift stabilized). Rows are exact at return, columns within tol.
TransportPlan sinkhorn_balanced(const numeric::Matrix& cost, double gamma,
                                std::size_t max_iter = 10000, double tol = 1e-9);

/// alpha_j = softmax_j(-||z - w_j||^2 / gamma): the closed-form plan row for a
/// single test embedding against the simulated atlas.
std::vector<double> mixture_weights(std::span<const double> z, const numeric::Matrix& atlas,
                                    double gamma);

/// <P,C> + rho KL(P^T 1 || (1/m) 1) + gamma <P, log P>, with 0 log 0 = 0.
double plan_objective(const numeric::Matrix& p, const numeric::Matrix& cost, double gamma,
                      double rho);
double plan_entropy(const numeric::Matrix& p);

}  // namespace frisbi::ot
