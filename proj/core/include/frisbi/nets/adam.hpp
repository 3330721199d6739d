#pragma once

#include <cstddef>
#include <vector>

#include "frisbi/numeric/matrix.hpp"

namespace frisbi::nets {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a list of parameter tensors.
class AdamState {
 public:
  AdamState(const std::vector<numeric::Matrix>& params, AdamConfig cfg = {});

  /// In-place update; throws Error("shape") when grads do not match params.
  void step(std::vector<numeric::Matrix>& params,
            const std::vector<numeric::Matrix>& grads);

  std::size_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<numeric::Matrix> m_;
  std::vector<numeric::Matrix> v_;
  std::size_t t_ = 0;
};

}  // namespace frisbi::nets
