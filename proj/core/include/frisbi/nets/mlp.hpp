#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "frisbi/numeric/matrix.hpp"
#include "frisbi/numeric/rng.hpp"
#include "frisbi/numeric/tape.hpp"

namespace frisbi::nets {

inline constexpr std::size_t kEmbedDim = 16;

/// Fully connected encoder, ReLU on hidden layers, linear output.
/// Parameter layout: [W0, b0, W1, b1, ...], W: in x out, b: 1 x out.
/// The pipeline's statistics encoders use widths {100, 128, 128, 16}.
struct MlpEncoder {
  std::vector<std::size_t> widths;
  std::vector<numeric::Matrix> params;

  /// He-uniform weights, zero biases.
  static MlpEncoder make(std::vector<std::size_t> widths, numeric::RngStream& rng);
  static MlpEncoder make_default(numeric::RngStream& rng, std::size_t input_dim = 100);

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }

  /// Batched forward pass, one input per row.
  numeric::Matrix forward(const numeric::Matrix& x) const;
  /// Single observation -> embedding. Throws Error("shape") on length mismatch.
  std::vector<double> encode(std::span<const double> x) const;

  /// Differentiable forward over parameter vars (ordered as `params`).
  static numeric::Var graph(numeric::Tape& tape, std::span<const numeric::Var> params,
                            numeric::Var x);
};

}  // namespace frisbi::nets
