#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "frisbi/domain.hpp"
#include "frisbi/nets/flow.hpp"
#include "frisbi/nets/mlp.hpp"
#include "frisbi/numeric/matrix.hpp"
#include "frisbi/numeric/rng.hpp"
#include "frisbi/ot/ot.hpp"
#include "frisbi/pipeline/pipeline.hpp"

namespace frisbi::baselines {

/// Common posterior surface; metrics are baseline-agnostic through it.
class Posterior {
 public:
  virtual ~Posterior() = default;
  virtual double log_prob(std::span<const double> theta) const = 0;
  /// n draws, one per row.
  virtual numeric::Matrix sample(std::size_t n, numeric::RngStream& rng) const = 0;
};

/// Single conditional flow at a fixed context.
class FlowPosterior : public Posterior {
 public:
  FlowPosterior(const nets::FlowModel* flow, std::vector<double> ctx)
      : flow_(flow), ctx_(std::move(ctx)) {}
  double log_prob(std::span<const double> theta) const override;
  numeric::Matrix sample(std::size_t n, numeric::RngStream& rng) const override;

 private:
  const nets::FlowModel* flow_;
  std::vector<double> ctx_;
};

/// Weighted mixture of NPE posteriors, log-density
/// lse_j(log alpha_j + log q(theta | w_j)).
class MixturePosterior : public Posterior {
 public:
  MixturePosterior(std::vector<double> weights, const numeric::Matrix* atom_ctx,
                   const nets::FlowModel* flow);
  double log_prob(std::span<const double> theta) const override;
  numeric::Matrix sample(std::size_t n, numeric::RngStream& rng) const override;
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
  std::vector<double> cdf_;
  const numeric::Matrix* atom_ctx_;
  const nets::FlowModel* flow_;
};

/// Uniform density over the prior box.
class PriorPosterior : public Posterior {
 public:
  explicit PriorPosterior(const BoxDomain& box) : box_(box) {}
  double log_prob(std::span<const double> theta) const override;
  numeric::Matrix sample(std::size_t n, numeric::RngStream& rng) const override;

 private:
  BoxDomain box_;
};

enum class BaselineKind {
  kRopeFullTest,
  kRopeSingleSample,
  kOtOnlyFullTest,
  kOtOnlySingleSample,
  kFinetuneOnly,
  kNpeDirect,
  kSbiOracle,
  kPrior,
  kFrisbiJointOnly,
  kFrisbiFull,
  kFrisbiAmortizeOnly,
};

std::string to_string(BaselineKind kind);
BaselineKind baseline_from_string(const std::string& name);
std::vector<BaselineKind> all_baselines();

/// NSE fine-tuning on the calibration pairs only: the lambda-only special
/// case of the joint loss, g initialized from the frozen NSE.
pipeline::TransferResult rope_finetune(const numeric::Matrix& calib_xr,
                                       const numeric::Matrix& calib_xs,
                                       const nets::MlpEncoder& nse,
                                       const pipeline::JointLossConfig& cfg,
                                       numeric::RngStream batch_rng);

struct RopeCoupling {
  numeric::Matrix alpha;  // one weight row per real sample, rows sum to 1
  bool converged = true;
};

/// Transductive coupling between a batch of real embeddings and the simulated
/// atlas; balanced Sinkhorn unless the unbalanced RoPE variant is requested.
RopeCoupling rope_coupling(const numeric::Matrix& real_emb, const numeric::Matrix& atlas,
                           const ot::OtParams& params, bool unbalanced, double rho);

/// Inductive RoPE variant: append one test embedding to the unpaired
/// embeddings, solve the coupling, return the test row scaled to a
/// distribution over atoms.
std::vector<double> rope_single_sample_weights(std::span<const double> test_emb,
                                               const numeric::Matrix& u_emb,
                                               const numeric::Matrix& atlas,
                                               const ot::OtParams& params, bool unbalanced,
                                               double rho, bool* converged = nullptr);

/// Everything a baseline may need; build_baseline checks per kind and throws
/// Error("missing-dependency") when a required part is absent.
struct BaselineInputs {
  const numeric::Matrix* test_x = nullptr;
  const numeric::Matrix* test_theta = nullptr;  // SbiOracle
  const numeric::Matrix* u_x = nullptr;         // single-sample couplings

  const nets::MlpEncoder* nse = nullptr;
  const nets::FlowModel* npe = nullptr;
  const nets::MlpEncoder* rope_encoder = nullptr;
  const nets::MlpEncoder* frisbi_encoder = nullptr;
  const nets::FlowModel* frisbi_amortizer = nullptr;
  const nets::FlowModel* rope_amortizer = nullptr;

  const numeric::Matrix* rope_atlas = nullptr;    // D_OT embeddings through nse
  const numeric::Matrix* frisbi_atlas = nullptr;  // D_OT + calib sims through nse

  ot::OtParams ot;
  bool rope_unbalanced = false;
  double rope_rho = 1.0;
  double sigma_obs = 0.01;
  std::uint64_t seed = 0;
  BoxDomain box;
};

struct BaselineBuild {
  std::vector<std::unique_ptr<Posterior>> posteriors;  // one per test point
  numeric::Matrix full_test_alpha;                     // transductive kinds only
  bool coupling_converged = true;
};

BaselineBuild build_baseline(BaselineKind kind, const BaselineInputs& in);

}  // namespace frisbi::baselines
