#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "frisbi/domain.hpp"
#include "frisbi/numeric/matrix.hpp"
#include "frisbi/numeric/rng.hpp"
#include "frisbi/numeric/tape.hpp"

namespace frisbi::nets {

/// Conditional affine-coupling flow over the 2-d parameter box.
///
/// A fixed pre-transform maps theta through per-dimension affine-to-(0,1)
/// then logit into unbounded space; six coupling layers alternate which
/// dimension they rescale/shift, each conditioned on the untransformed
/// dimension concatenated with the context embedding. Conditioner MLPs are
/// (1+ctx) -> 64 -> 64 -> (shift, raw) with ReLU hidden layers and
/// log-scale = 3 tanh(raw/3), so |log-scale| <= 3. Final conditioner layers
/// start at zero, making the flow the identity at init.
///
/// log_prob is exact in original theta units: standard-normal base density
/// plus the coupling log-determinants (sum of emitted log-scales) plus the
/// pre-transform log-Jacobian. sample() inverts the same map, so samples are
/// strictly inside the box by construction.
class FlowModel {
 public:
  static constexpr std::size_t kCouplings = 6;
  static constexpr std::size_t kHidden = 64;
  static constexpr double kLogScaleBound = 3.0;

  BoxDomain box;
  std::size_t ctx_dim = 0;
  /// Per coupling: V1, c1, V2, c2, V3, c3 (V3/c3 zero-initialized).
  std::vector<numeric::Matrix> params;

  static FlowModel make(const BoxDomain& box, std::size_t ctx_dim, numeric::RngStream& rng);

  /// Exact log-density. Throws Error("support") unless theta is strictly
  /// inside the box.
  double log_prob(std::span<const double> theta, std::span<const double> ctx) const;

  /// Batched log-density; ctx has either one row (shared) or one per theta row.
  numeric::Matrix log_prob_rows(const numeric::Matrix& thetas,
                                const numeric::Matrix& ctx) const;

  /// One draw per ctx row.
  numeric::Matrix sample_rows(const numeric::Matrix& ctx, numeric::RngStream& rng) const;
  /// n draws for a single context.
  numeric::Matrix sample(std::span<const double> ctx, std::size_t n,
                         numeric::RngStream& rng) const;

  /// theta -> base-space latent (round-trip/testing surface).
  numeric::Matrix to_latent(const numeric::Matrix& thetas, const numeric::Matrix& ctx) const;
  /// base-space latent -> theta.
  numeric::Matrix from_latent(const numeric::Matrix& latent, const numeric::Matrix& ctx) const;

  /// Differentiable per-row log-density (n x 1). thetas are data (no gradient);
  /// ctx is a tape node so encoder gradients flow through the context.
  static numeric::Var log_prob_graph(numeric::Tape& tape, const BoxDomain& box,
                                     std::span<const numeric::Var> params,
                                     const numeric::Matrix& thetas, numeric::Var ctx);

  /// Pre-transform pieces shared by the dense and tape paths.
  static void pre_transform(const BoxDomain& box, const numeric::Matrix& thetas,
                            numeric::Matrix& y, numeric::Matrix& log_jac);
};

}  // namespace frisbi::nets
