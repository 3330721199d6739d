#pragma once

#include <array>
#include <cstddef>
#include <numbers>
#include <vector>

#include "frisbi/domain.hpp"
#include "frisbi/numeric/rng.hpp"

namespace frisbi::sim {

inline constexpr std::size_t kObsDim = 100;
inline constexpr double kHorizon = 10.0;
inline constexpr double kRk4Dt = 0.01;
inline constexpr double kDefaultSigmaObs = 0.01;

/// Latent pendulum parameters: natural frequency and initial angle.
struct ParameterVector {
  double omega0 = 0.0;
  double phi0 = 0.0;
};

/// omega0 in [pi/10, pi], phi0 in [-pi, pi].
inline BoxDomain pendulum_prior_box() {
  using std::numbers::pi;
  return BoxDomain{{pi / 10.0, -pi}, {pi, pi}};
}

using Observation = std::array<double, kObsDim>;

/// Integrates phi'' + friction*phi' + omega0^2 sin(phi) = 0 with phi(0)=phi0,
/// phi'(0)=0 (RK4, dt = 0.01 over [0,10]), samples the angle at t = 0.1..10.0
/// and adds N(0, sigma_obs^2) observation noise. friction = 0 is the ideal
/// simulator S; friction > 0 emulates the "real" system.
Observation simulate_pendulum(const ParameterVector& theta, double friction,
                              numeric::RngStream& rng,
                              double sigma_obs = kDefaultSigmaObs);

std::vector<ParameterVector> sample_prior(std::size_t n, numeric::RngStream& rng);

/// Noise-free trajectory on the full RK4 grid; used by energy/amplitude checks.
std::vector<std::array<double, 2>> integrate_pendulum(const ParameterVector& theta,
                                                      double friction);

}  // namespace frisbi::sim
