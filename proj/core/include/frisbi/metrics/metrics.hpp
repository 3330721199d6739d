#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "frisbi/baselines/baselines.hpp"
#include "frisbi/numeric/matrix.hpp"
#include "frisbi/numeric/rng.hpp"

namespace frisbi::metrics {

/// Posterior evaluation for one baseline on one fold.
struct EvalReport {
  double lpp = 0.0;
  std::vector<double> lpp_per_point;
  double acauc = 0.0;
  std::vector<std::pair<double, double>> coverage_curve;  // (level, dim-mean ECP)
  std::size_t n_test = 0;
  std::size_t samples_per_point = 1024;
};

/// Mean log-density of the true parameters under their estimated posteriors.
double lpp(std::span<const baselines::Posterior* const> posteriors,
           const numeric::Matrix& test_theta, std::vector<double>* per_point = nullptr);

std::vector<double> default_levels();  // 0.05, 0.10, ..., 0.95

struct AcaucResult {
  double acauc = 0.0;
  std::vector<std::pair<double, double>> coverage_curve;
};

/// Per-dimension central credible intervals from empirical sample quantiles at
/// each level; ECP_d(a) is the fraction of test points whose true parameter
/// falls inside. ACAUC = mean_d of the trapezoid integral of (a - ECP_d(a))
/// over [0, 1] (the curve is anchored at a = 0, a point interval, and a = 1,
/// the full sample range). Positive means overconfident.
AcaucResult acauc(std::span<const baselines::Posterior* const> posteriors,
                  const numeric::Matrix& test_theta, std::size_t samples_per_point,
                  numeric::RngStream rng, std::span<const double> levels = {});

EvalReport evaluate(std::span<const baselines::Posterior* const> posteriors,
                    const numeric::Matrix& test_theta, std::size_t samples_per_point,
                    numeric::RngStream rng, bool with_acauc = true);

}  // namespace frisbi::metrics
