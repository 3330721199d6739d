#include "frisbi/simulate/pendulum.hpp"

#include <cmath>

#include "frisbi/error.hpp"

namespace frisbi::sim {

namespace {

struct State {
  double phi;
  double vel;
};

State deriv(const State& s, double omega0, double friction) {
  return {s.vel, -friction * s.vel - omega0 * omega0 * std::sin(s.phi)};
}

State rk4_step(const State& s, double omega0, double friction, double dt) {
  const State k1 = deriv(s, omega0, friction);
  const State k2 = deriv({s.phi + 0.5 * dt * k1.phi, s.vel + 0.5 * dt * k1.vel}, omega0, friction);
  const State k3 = deriv({s.phi + 0.5 * dt * k2.phi, s.vel + 0.5 * dt * k2.vel}, omega0, friction);
  const State k4 = deriv({s.phi + dt * k3.phi, s.vel + dt * k3.vel}, omega0, friction);
  return {s.phi + dt / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi),
          s.vel + dt / 6.0 * (k1.vel + 2.0 * k2.vel + 2.0 * k3.vel + k4.vel)};
}

}  // namespace

std::vector<std::array<double, 2>> integrate_pendulum(const ParameterVector& theta,
                                                      double friction) {
  const auto steps = static_cast<std::size_t>(std::llround(kHorizon / kRk4Dt));
  std::vector<std::array<double, 2>> traj;
  traj.reserve(steps + 1);
  State s{theta.phi0, 0.0};
  traj.push_back({s.phi, s.vel});
  for (std::size_t i = 0; i < steps; ++i) {
    s = rk4_step(s, theta.omega0, friction, kRk4Dt);
    traj.push_back({s.phi, s.vel});
  }
  return traj;
}

Observation simulate_pendulum(const ParameterVector& theta, double friction,
                              numeric::RngStream& rng, double sigma_obs) {
  if (friction < 0.0) throw Error("negative-friction", "friction must be >= 0");
  const BoxDomain box = pendulum_prior_box();
  const std::array<double, 2> t{theta.omega0, theta.phi0};
  if (!box.inside(t)) throw Error("prior-box", "theta outside the prior box");

  const auto traj = integrate_pendulum(theta, friction);
  // Observation grid: every 10th RK4 step, t = 0.1, 0.2, ..., 10.0.
  const std::size_t stride = traj.size() / kObsDim;
  Observation obs{};
  for (std::size_t k = 0; k < kObsDim; ++k) {
    obs[k] = traj[(k + 1) * stride][0];
    if (sigma_obs > 0.0) obs[k] += sigma_obs * rng.normal();
  }
  return obs;
}

std::vector<ParameterVector> sample_prior(std::size_t n, numeric::RngStream& rng) {
  if (n == 0) throw Error("empty-request", "sample_prior needs n >= 1");
  const BoxDomain box = pendulum_prior_box();
  std::vector<ParameterVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ParameterVector p;
    p.omega0 = rng.uniform(box.lo[0], box.hi[0]);
    p.phi0 = rng.uniform(box.lo[1], box.hi[1]);
    out.push_back(p);
  }
  return out;
}

}  // namespace frisbi::sim
