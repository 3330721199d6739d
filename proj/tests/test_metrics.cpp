#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "frisbi/baselines/baselines.hpp"
#include "frisbi/error.hpp"
#include "frisbi/metrics/metrics.hpp"
#include "frisbi/simulate/pendulum.hpp"

using namespace frisbi;
using numeric::Matrix;
using numeric::RngStream;

namespace {

/// Near-point posterior that never covers the truth.
class DegeneratePosterior : public baselines::Posterior {
 public:
  explicit DegeneratePosterior(std::array<double, 2> at) : at_(at) {}
  double log_prob(std::span<const double>) const override { return 10.0; }
  Matrix sample(std::size_t n, RngStream& rng) const override {
    Matrix out(n, 2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < 2; ++d) out(i, d) = at_[d] + 1e-9 * rng.normal();
    return out;
  }

 private:
  std::array<double, 2> at_;
};

/// Applies strictly monotone per-dimension maps to another posterior's draws.
class ReparameterizedPosterior : public baselines::Posterior {
 public:
  explicit ReparameterizedPosterior(const baselines::Posterior* base) : base_(base) {}
  static double map0(double x) { return std::exp(0.8 * x); }
  static double map1(double x) { return x * x * x + 2.0 * x; }
  double log_prob(std::span<const double>) const override { return 0.0; }
  Matrix sample(std::size_t n, RngStream& rng) const override {
    Matrix draws = base_->sample(n, rng);
    for (std::size_t i = 0; i < n; ++i) {
      draws(i, 0) = map0(draws(i, 0));
      draws(i, 1) = map1(draws(i, 1));
    }
    return draws;
  }

 private:
  const baselines::Posterior* base_;
};

}  // namespace

TEST_CASE("lpp: prior value exact, mixture with one atom") {
  const auto box = sim::pendulum_prior_box();
  RngStream rng(1, numeric::StreamId::kTest);
  const std::size_t n = 50;
  Matrix theta(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    theta(i, 0) = rng.uniform(box.lo[0], box.hi[0]);
    theta(i, 1) = rng.uniform(box.lo[1], box.hi[1]);
  }
  std::vector<std::unique_ptr<baselines::Posterior>> priors;
  std::vector<const baselines::Posterior*> ptrs;
  for (std::size_t i = 0; i < n; ++i)
    priors.push_back(std::make_unique<baselines::PriorPosterior>(box));
  for (const auto& p : priors) ptrs.push_back(p.get());

  std::vector<double> per_point;
  const double value = metrics::lpp(ptrs, theta, &per_point);
  CHECK(value == doctest::Approx(-box.log_volume()).epsilon(1e-15));
  CHECK(std::abs(value - (-2.8773)) < 1e-4);
  for (double lp : per_point) CHECK(lp == -box.log_volume());
}

TEST_CASE("acauc: prior posterior on prior-drawn truths is calibrated") {
  const auto box = sim::pendulum_prior_box();
  RngStream rng(2, numeric::StreamId::kTest);
  const std::size_t n = 1000;
  Matrix theta(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    theta(i, 0) = rng.uniform(box.lo[0], box.hi[0]);
    theta(i, 1) = rng.uniform(box.lo[1], box.hi[1]);
  }
  std::vector<std::unique_ptr<baselines::Posterior>> priors;
  std::vector<const baselines::Posterior*> ptrs;
  for (std::size_t i = 0; i < n; ++i)
    priors.push_back(std::make_unique<baselines::PriorPosterior>(box));
  for (const auto& p : priors) ptrs.push_back(p.get());

  auto result = metrics::acauc(ptrs, theta, 1024, RngStream(3, numeric::StreamId::kEvalSampling));
  CHECK(std::abs(result.acauc) < 0.03);

  // coverage curve is monotone non-decreasing in the level
  for (std::size_t l = 1; l < result.coverage_curve.size(); ++l)
    CHECK(result.coverage_curve[l].second >= result.coverage_curve[l - 1].second - 1e-12);
}

TEST_CASE("acauc: never-covering degenerate posterior approaches +0.5") {
  const auto box = sim::pendulum_prior_box();
  RngStream rng(4, numeric::StreamId::kTest);
  const std::size_t n = 400;
  Matrix theta(n, 2);
  std::vector<std::unique_ptr<baselines::Posterior>> posteriors;
  std::vector<const baselines::Posterior*> ptrs;
  for (std::size_t i = 0; i < n; ++i) {
    theta(i, 0) = rng.uniform(box.lo[0] + 0.3, box.hi[0]);
    theta(i, 1) = rng.uniform(box.lo[1] + 0.5, box.hi[1]);
    // point mass far from the truth
    posteriors.push_back(
        std::make_unique<DegeneratePosterior>(std::array<double, 2>{box.lo[0] + 0.01, box.lo[1] + 0.01}));
  }
  for (const auto& p : posteriors) ptrs.push_back(p.get());
  auto result = metrics::acauc(ptrs, theta, 512, RngStream(5, numeric::StreamId::kEvalSampling));
  CHECK(result.acauc == doctest::Approx(0.5).epsilon(0.04));
  CHECK(result.acauc > 0.0);  // overconfident direction
}

TEST_CASE("acauc is invariant under strictly monotone reparameterization") {
  const auto box = sim::pendulum_prior_box();
  RngStream rng(6, numeric::StreamId::kTest);
  const std::size_t n = 300;
  Matrix theta(n, 2), mapped_theta(n, 2);
  std::vector<std::unique_ptr<baselines::Posterior>> base;
  std::vector<std::unique_ptr<baselines::Posterior>> mapped;
  std::vector<const baselines::Posterior*> base_ptrs, mapped_ptrs;
  for (std::size_t i = 0; i < n; ++i) {
    theta(i, 0) = rng.uniform(box.lo[0], box.hi[0]);
    theta(i, 1) = rng.uniform(box.lo[1], box.hi[1]);
    mapped_theta(i, 0) = ReparameterizedPosterior::map0(theta(i, 0));
    mapped_theta(i, 1) = ReparameterizedPosterior::map1(theta(i, 1));
    base.push_back(std::make_unique<baselines::PriorPosterior>(box));
  }
  for (const auto& p : base) {
    base_ptrs.push_back(p.get());
    mapped.push_back(std::make_unique<ReparameterizedPosterior>(p.get()));
  }
  for (const auto& p : mapped) mapped_ptrs.push_back(p.get());

  auto r1 = metrics::acauc(base_ptrs, theta, 512, RngStream(7, numeric::StreamId::kEvalSampling));
  auto r2 = metrics::acauc(mapped_ptrs, mapped_theta, 512,
                           RngStream(7, numeric::StreamId::kEvalSampling));
  CHECK(r1.acauc == doctest::Approx(r2.acauc).epsilon(1e-2));
}

TEST_CASE("acauc rejects an insufficient sample budget") {
  const auto box = sim::pendulum_prior_box();
  Matrix theta(2, 2, 1.0);
  std::vector<std::unique_ptr<baselines::Posterior>> ps;
  ps.push_back(std::make_unique<baselines::PriorPosterior>(box));
  ps.push_back(std::make_unique<baselines::PriorPosterior>(box));
  std::vector<const baselines::Posterior*> ptrs{ps[0].get(), ps[1].get()};
  CHECK_THROWS_WITH_AS(
      metrics::acauc(ptrs, theta, 100, RngStream(8, numeric::StreamId::kEvalSampling)),
      doctest::Contains("sample-budget"), Error);
}
