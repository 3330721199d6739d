#include "frisbi/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "frisbi/error.hpp"

namespace frisbi::metrics {

namespace {

// Linearly interpolated order statistic, p in [0, 1].
double quantile(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  const double pos = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= n) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

double lpp(std::span<const baselines::Posterior* const> posteriors,
           const numeric::Matrix& test_theta, std::vector<double>* per_point) {
  if (posteriors.size() != test_theta.rows())
    throw Error("shape", "one posterior per test point required");
  if (per_point) per_point->clear();
  double total = 0.0;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const double lp = posteriors[i]->log_prob(test_theta.row(i));
    if (per_point) per_point->push_back(lp);
    total += lp;
  }
  return total / static_cast<double>(posteriors.size());
}

std::vector<double> default_levels() {
  std::vector<double> levels;
  for (int k = 1; k <= 19; ++k) levels.push_back(0.05 * k);
  return levels;
}

AcaucResult acauc(std::span<const baselines::Posterior* const> posteriors,
                  const numeric::Matrix& test_theta, std::size_t samples_per_point,
                  numeric::RngStream rng, std::span<const double> levels_in) {
  if (posteriors.size() != test_theta.rows())
    throw Error("shape", "one posterior per test point required");
  if (samples_per_point < 256)
    throw Error("sample-budget", "acauc needs at least 256 samples per point");
  std::vector<double> levels =
      levels_in.empty() ? default_levels() : std::vector<double>(levels_in.begin(), levels_in.end());
  if (levels.size() < 2) throw Error("sample-budget", "acauc needs at least two levels");

  // Anchor the curve at 0 (point interval) and 1 (full sample range).
  std::vector<double> grid;
  grid.push_back(0.0);
  grid.insert(grid.end(), levels.begin(), levels.end());
  grid.push_back(1.0);

  const std::size_t n = posteriors.size();
  const std::size_t n_levels = grid.size();
  std::vector<std::vector<double>> covered(kThetaDim, std::vector<double>(n_levels, 0.0));

  std::vector<double> column(samples_per_point);
  for (std::size_t i = 0; i < n; ++i) {
    numeric::RngStream point_rng = rng.fork(i);
    const numeric::Matrix draws = posteriors[i]->sample(samples_per_point, point_rng);
    for (std::size_t d = 0; d < kThetaDim; ++d) {
      for (std::size_t s = 0; s < samples_per_point; ++s) column[s] = draws(s, d);
      std::sort(column.begin(), column.end());
      const double truth = test_theta(i, d);
      for (std::size_t l = 0; l < n_levels; ++l) {
        const double a = grid[l];
        const double lo = quantile(column, (1.0 - a) / 2.0);
        const double hi = quantile(column, (1.0 + a) / 2.0);
        if (truth >= lo && truth <= hi) covered[d][l] += 1.0;
      }
    }
  }

  AcaucResult out;
  double acauc_sum = 0.0;
  for (std::size_t d = 0; d < kThetaDim; ++d) {
    for (double& c : covered[d]) c /= static_cast<double>(n);
    double integral = 0.0;
    for (std::size_t l = 0; l + 1 < n_levels; ++l) {
      const double f0 = grid[l] - covered[d][l];
      const double f1 = grid[l + 1] - covered[d][l + 1];
      integral += 0.5 * (f0 + f1) * (grid[l + 1] - grid[l]);
    }
    acauc_sum += integral;
  }
  out.acauc = acauc_sum / static_cast<double>(kThetaDim);
  for (std::size_t l = 0; l < n_levels; ++l) {
    double mean_ecp = 0.0;
    for (std::size_t d = 0; d < kThetaDim; ++d) mean_ecp += covered[d][l];
    out.coverage_curve.emplace_back(grid[l], mean_ecp / static_cast<double>(kThetaDim));
  }
  return out;
}

EvalReport evaluate(std::span<const baselines::Posterior* const> posteriors,
                    const numeric::Matrix& test_theta, std::size_t samples_per_point,
                    numeric::RngStream rng, bool with_acauc) {
  EvalReport report;
  report.n_test = posteriors.size();
  report.samples_per_point = samples_per_point;
  report.lpp = lpp(posteriors, test_theta, &report.lpp_per_point);
  if (with_acauc) {
    AcaucResult a = acauc(posteriors, test_theta, samples_per_point, rng);
    report.acauc = a.acauc;
    report.coverage_curve = std::move(a.coverage_curve);
  }
  return report;
}

}  // namespace frisbi::metrics
