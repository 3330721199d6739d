#include "frisbi/nets/adam.hpp"

#include <cmath>

#include "frisbi/error.hpp"

namespace frisbi::nets {

AdamState::AdamState(const std::vector<numeric::Matrix>& params, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.rows(), p.cols(), 0.0);
    v_.emplace_back(p.rows(), p.cols(), 0.0);
  }
}

void AdamState::step(std::vector<numeric::Matrix>& params,
                     const std::vector<numeric::Matrix>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw Error("shape", "adam parameter/gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].same_shape(grads[p]) || !params[p].same_shape(m_[p]))
      throw Error("shape", "adam tensor shape mismatch");
    auto x = params[p].flat();
    auto g = grads[p].flat();
    auto m = m_[p].flat();
    auto v = v_[p].flat();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace frisbi::nets
