#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

namespace frisbi {

inline constexpr std::size_t kThetaDim = 2;

/// Axis-aligned parameter box; the support of the uniform prior and of every
/// flow in the pipeline.
struct BoxDomain {
  std::array<double, kThetaDim> lo{};
  std::array<double, kThetaDim> hi{};

  double range(std::size_t d) const { return hi[d] - lo[d]; }
  double volume() const {
    double v = 1.0;
    for (std::size_t d = 0; d < kThetaDim; ++d) v *= range(d);
    return v;
  }
  double log_volume() const { return std::log(volume()); }
  bool strictly_inside(std::span<const double> theta) const {
    for (std::size_t d = 0; d < kThetaDim; ++d)
      if (!(theta[d] > lo[d] && theta[d] < hi[d])) return false;
    return true;
  }
  bool inside(std::span<const double> theta) const {
    for (std::size_t d = 0; d < kThetaDim; ++d)
      if (theta[d] < lo[d] || theta[d] > hi[d]) return false;
    return true;
  }
  double clip(double value, std::size_t d) const {
    return std::fmin(hi[d], std::fmax(lo[d], value));
  }
};

}  // namespace frisbi
