#include "frisbi/nets/mlp.hpp"

#include <cmath>

#include "frisbi/error.hpp"

namespace frisbi::nets {

MlpEncoder MlpEncoder::make(std::vector<std::size_t> widths, numeric::RngStream& rng) {
  if (widths.size() < 2) throw Error("shape", "MLP needs at least input and output widths");
  MlpEncoder enc;
  enc.widths = std::move(widths);
  for (std::size_t l = 0; l + 1 < enc.widths.size(); ++l) {
    const std::size_t fan_in = enc.widths[l];
    const std::size_t fan_out = enc.widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    numeric::Matrix w(fan_in, fan_out);
    for (double& x : w.flat()) x = rng.uniform(-bound, bound);
    enc.params.push_back(std::move(w));
    enc.params.emplace_back(1, fan_out, 0.0);
  }
  return enc;
}

MlpEncoder MlpEncoder::make_default(numeric::RngStream& rng, std::size_t input_dim) {
  return make({input_dim, 128, 128, kEmbedDim}, rng);
}

numeric::Matrix MlpEncoder::forward(const numeric::Matrix& x) const {
  if (x.cols() != input_dim()) throw Error("shape", "encoder input width mismatch");
  numeric::Matrix h = x;
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    numeric::Matrix next = numeric::matmul(h, params[2 * l]);
    const numeric::Matrix& bias = params[2 * l + 1];
    for (std::size_t i = 0; i < next.rows(); ++i)
      for (std::size_t j = 0; j < next.cols(); ++j) next(i, j) += bias(0, j);
    if (l + 1 < layers)
      for (double& v : next.flat())
        if (v < 0.0) v = 0.0;
    h = std::move(next);
  }
  return h;
}

std::vector<double> MlpEncoder::encode(std::span<const double> x) const {
  if (x.size() != input_dim()) throw Error("shape", "encoder input width mismatch");
  numeric::Matrix row = numeric::Matrix::row_vector(x);
  numeric::Matrix out = forward(row);
  return {out.flat().begin(), out.flat().end()};
}

numeric::Var MlpEncoder::graph(numeric::Tape& tape, std::span<const numeric::Var> params,
                               numeric::Var x) {
  const std::size_t layers = params.size() / 2;
  numeric::Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    h = tape.add_row_broadcast(tape.matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < layers) h = tape.relu(h);
  }
  return h;
}

}  // namespace frisbi::nets
