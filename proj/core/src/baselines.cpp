#include "frisbi/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "frisbi/error.hpp"
#include "frisbi/simulate/pendulum.hpp"

namespace frisbi::baselines {

using numeric::Matrix;
using numeric::RngStream;

double FlowPosterior::log_prob(std::span<const double> theta) const {
  return flow_->log_prob(theta, ctx_);
}

Matrix FlowPosterior::sample(std::size_t n, RngStream& rng) const {
  return flow_->sample(ctx_, n, rng);
}

MixturePosterior::MixturePosterior(std::vector<double> weights, const Matrix* atom_ctx,
                                   const nets::FlowModel* flow)
    : weights_(std::move(weights)), atom_ctx_(atom_ctx), flow_(flow) {
  if (weights_.size() != atom_ctx_->rows())
    throw Error("shape", "mixture weights/atom count mismatch");
  cdf_.resize(weights_.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    acc += weights_[j];
    cdf_[j] = acc;
  }
}

double MixturePosterior::log_prob(std::span<const double> theta) const {
  const std::size_t m = weights_.size();
  Matrix thetas(m, theta.size());
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t d = 0; d < theta.size(); ++d) thetas(j, d) = theta[d];
  const Matrix lp = flow_->log_prob_rows(thetas, *atom_ctx_);
  std::vector<double> terms;
  terms.reserve(m);
  for (std::size_t j = 0; j < m; ++j)
    if (weights_[j] > 0.0) terms.push_back(std::log(weights_[j]) + lp(j, 0));
  return numeric::logsumexp(terms);
}

Matrix MixturePosterior::sample(std::size_t n, RngStream& rng) const {
  // Categorical atom draws, then one batched inverse pass per atom.
  std::vector<std::size_t> counts(weights_.size(), 0);
  const double total = cdf_.back();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    counts[static_cast<std::size_t>(it - cdf_.begin())]++;
  }
  Matrix out(n, kThetaDim);
  std::size_t row = 0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) continue;
    const Matrix draws = flow_->sample(atom_ctx_->row(j), counts[j], rng);
    for (std::size_t k = 0; k < counts[j]; ++k, ++row)
      for (std::size_t d = 0; d < kThetaDim; ++d) out(row, d) = draws(k, d);
  }
  return out;
}

double PriorPosterior::log_prob(std::span<const double> theta) const {
  if (!box_.inside(theta)) return -std::numeric_limits<double>::infinity();
  return -box_.log_volume();
}

Matrix PriorPosterior::sample(std::size_t n, RngStream& rng) const {
  Matrix out(n, kThetaDim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < kThetaDim; ++d)
      out(i, d) = rng.uniform(box_.lo[d], box_.hi[d]);
  return out;
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kRopeFullTest: return "rope_full_test";
    case BaselineKind::kRopeSingleSample: return "rope_single_sample";
    case BaselineKind::kOtOnlyFullTest: return "ot_only_full_test";
    case BaselineKind::kOtOnlySingleSample: return "ot_only_single_sample";
    case BaselineKind::kFinetuneOnly: return "finetune_only";
    case BaselineKind::kNpeDirect: return "npe_direct";
    case BaselineKind::kSbiOracle: return "sbi_oracle";
    case BaselineKind::kPrior: return "prior";
    case BaselineKind::kFrisbiJointOnly: return "frisbi_joint_only";
    case BaselineKind::kFrisbiFull: return "frisbi_full";
    case BaselineKind::kFrisbiAmortizeOnly: return "frisbi_amortize_only";
  }
  throw Error("config:baselines", "unknown baseline kind");
}

std::vector<BaselineKind> all_baselines() {
  return {BaselineKind::kRopeFullTest,     BaselineKind::kRopeSingleSample,
          BaselineKind::kOtOnlyFullTest,   BaselineKind::kOtOnlySingleSample,
          BaselineKind::kFinetuneOnly,     BaselineKind::kNpeDirect,
          BaselineKind::kSbiOracle,        BaselineKind::kPrior,
          BaselineKind::kFrisbiJointOnly,  BaselineKind::kFrisbiFull,
          BaselineKind::kFrisbiAmortizeOnly};
}

BaselineKind baseline_from_string(const std::string& name) {
  for (BaselineKind k : all_baselines())
    if (to_string(k) == name) return k;
  throw Error("config:baselines", "unknown baseline '" + name + "'");
}

pipeline::TransferResult rope_finetune(const Matrix& calib_xr, const Matrix& calib_xs,
                                       const nets::MlpEncoder& nse,
                                       const pipeline::JointLossConfig& cfg,
                                       RngStream batch_rng) {
  if (calib_xr.rows() == 0)
    throw Error("empty-request", "rope_finetune needs a nonempty calibration set");
  pipeline::JointLossConfig mse_only = cfg;
  mse_only.include_ot = false;
  // Batches still iterate the unpaired reals in train_transfer; here the
  // loss depends on the calibration pairs only, so a single dummy batch
  // source (the calibration reals themselves) drives the epoch count.
  return pipeline::train_transfer(calib_xr, calib_xr, calib_xs, nse, Matrix(0, calib_xr.cols()),
                                  mse_only, batch_rng);
}

RopeCoupling rope_coupling(const Matrix& real_emb, const Matrix& atlas,
                           const ot::OtParams& params, bool unbalanced, double rho) {
  const Matrix cost = numeric::pairwise_sqdist(real_emb, atlas);
  ot::TransportPlan plan;
  if (unbalanced) {
    ot::OtParams p = params;
    p.rho = rho;
    plan = ot::semibalanced_solve(cost, p);
  } else {
    plan = ot::sinkhorn_balanced(cost, params.gamma, params.max_iter,
                                 std::max(params.tol, 1e-9));
  }
  RopeCoupling out;
  out.converged = plan.converged;
  const double n = static_cast<double>(real_emb.rows());
  out.alpha = std::move(plan.p);
  for (double& v : out.alpha.flat()) v *= n;
  return out;
}

std::vector<double> rope_single_sample_weights(std::span<const double> test_emb,
                                               const Matrix& u_emb, const Matrix& atlas,
                                               const ot::OtParams& params, bool unbalanced,
                                               double rho, bool* converged) {
  if (u_emb.rows() == 0)
    throw Error("empty-request", "single-sample coupling needs a nonempty unpaired set");
  Matrix stacked = numeric::stack_rows(u_emb, Matrix::row_vector(test_emb));
  const RopeCoupling coupling = rope_coupling(stacked, atlas, params, unbalanced, rho);
  if (converged) *converged = coupling.converged;
  const std::size_t last = stacked.rows() - 1;
  std::vector<double> alpha(atlas.rows());
  for (std::size_t j = 0; j < alpha.size(); ++j) alpha[j] = coupling.alpha(last, j);
  return alpha;
}

namespace {

const Matrix& require(const Matrix* m, const char* what) {
  if (!m) throw Error("missing-dependency", std::string("baseline requires ") + what);
  return *m;
}

template <typename T>
const T& require_part(const T* p, const char* what) {
  if (!p) throw Error("missing-dependency", std::string("baseline requires ") + what);
  return *p;
}

std::vector<double> alpha_row(const Matrix& alpha, std::size_t i) {
  return {alpha.row(i).begin(), alpha.row(i).end()};
}

}  // namespace

BaselineBuild build_baseline(BaselineKind kind, const BaselineInputs& in) {
  BaselineBuild out;
  const Matrix& test_x = require(in.test_x, "the test observations");

  auto encode_test = [&](const nets::MlpEncoder& enc) { return enc.forward(test_x); };

  switch (kind) {
    case BaselineKind::kPrior: {
      for (std::size_t i = 0; i < test_x.rows(); ++i)
        out.posteriors.push_back(std::make_unique<PriorPosterior>(in.box));
      return out;
    }
    case BaselineKind::kNpeDirect: {
      const auto& nse = require_part(in.nse, "the frozen NSE");
      const auto& npe = require_part(in.npe, "the frozen NPE");
      const Matrix emb = encode_test(nse);
      for (std::size_t i = 0; i < emb.rows(); ++i)
        out.posteriors.push_back(std::make_unique<FlowPosterior>(
            &npe, std::vector<double>{emb.row(i).begin(), emb.row(i).end()}));
      return out;
    }
    case BaselineKind::kFinetuneOnly: {
      const auto& g = require_part(in.rope_encoder, "the finetuned encoder");
      const auto& npe = require_part(in.npe, "the frozen NPE");
      const Matrix emb = g.forward(test_x);
      for (std::size_t i = 0; i < emb.rows(); ++i)
        out.posteriors.push_back(std::make_unique<FlowPosterior>(
            &npe, std::vector<double>{emb.row(i).begin(), emb.row(i).end()}));
      return out;
    }
    case BaselineKind::kSbiOracle: {
      // Paired ideal observations of the test parameters.
      const auto& nse = require_part(in.nse, "the frozen NSE");
      const auto& npe = require_part(in.npe, "the frozen NPE");
      const Matrix& theta = require(in.test_theta, "the test parameters");
      RngStream base(in.seed, numeric::StreamId::kSbiOracleSim);
      for (std::size_t i = 0; i < theta.rows(); ++i) {
        RngStream rng = base.fork(i);
        const sim::Observation obs = sim::simulate_pendulum(
            {theta(i, 0), theta(i, 1)}, 0.0, rng, in.sigma_obs);
        out.posteriors.push_back(
            std::make_unique<FlowPosterior>(&npe, nse.encode(obs)));
      }
      return out;
    }
    case BaselineKind::kRopeFullTest:
    case BaselineKind::kOtOnlyFullTest: {
      const auto& npe = require_part(in.npe, "the frozen NPE");
      const Matrix& atlas = require(in.rope_atlas, "the simulated atlas embeddings");
      const nets::MlpEncoder& enc = (kind == BaselineKind::kRopeFullTest)
                                        ? require_part(in.rope_encoder, "the finetuned encoder")
                                        : require_part(in.nse, "the frozen NSE");
      const RopeCoupling coupling =
          rope_coupling(encode_test(enc), atlas, in.ot, in.rope_unbalanced, in.rope_rho);
      out.coupling_converged = coupling.converged;
      out.full_test_alpha = coupling.alpha;
      for (std::size_t i = 0; i < test_x.rows(); ++i)
        out.posteriors.push_back(
            std::make_unique<MixturePosterior>(alpha_row(coupling.alpha, i), in.rope_atlas, &npe));
      return out;
    }
    case BaselineKind::kRopeSingleSample:
    case BaselineKind::kOtOnlySingleSample: {
      const auto& npe = require_part(in.npe, "the frozen NPE");
      const Matrix& atlas = require(in.rope_atlas, "the simulated atlas embeddings");
      const Matrix& u_x = require(in.u_x, "the unpaired observations");
      const nets::MlpEncoder& enc = (kind == BaselineKind::kRopeSingleSample)
                                        ? require_part(in.rope_encoder, "the finetuned encoder")
                                        : require_part(in.nse, "the frozen NSE");
      const Matrix u_emb = enc.forward(u_x);
      const Matrix emb = encode_test(enc);
      bool all_converged = true;
      for (std::size_t i = 0; i < emb.rows(); ++i) {
        bool converged = true;
        auto alpha = rope_single_sample_weights(emb.row(i), u_emb, atlas, in.ot,
                                                in.rope_unbalanced, in.rope_rho, &converged);
        all_converged = all_converged && converged;
        out.posteriors.push_back(
            std::make_unique<MixturePosterior>(std::move(alpha), in.rope_atlas, &npe));
      }
      out.coupling_converged = all_converged;
      return out;
    }
    case BaselineKind::kFrisbiJointOnly: {
      const auto& npe = require_part(in.npe, "the frozen NPE");
      const auto& g = require_part(in.frisbi_encoder, "the jointly trained encoder");
      const Matrix& atlas = require(in.frisbi_atlas, "the joint atlas embeddings");
      const Matrix emb = g.forward(test_x);
      for (std::size_t i = 0; i < emb.rows(); ++i)
        out.posteriors.push_back(std::make_unique<MixturePosterior>(
            ot::mixture_weights(emb.row(i), atlas, in.ot.gamma), in.frisbi_atlas, &npe));
      return out;
    }
    case BaselineKind::kFrisbiFull: {
      const auto& g = require_part(in.frisbi_encoder, "the jointly trained encoder");
      const auto& amortizer = require_part(in.frisbi_amortizer, "the trained amortizer");
      const Matrix emb = g.forward(test_x);
      for (std::size_t i = 0; i < emb.rows(); ++i)
        out.posteriors.push_back(std::make_unique<FlowPosterior>(
            &amortizer, std::vector<double>{emb.row(i).begin(), emb.row(i).end()}));
      return out;
    }
    case BaselineKind::kFrisbiAmortizeOnly: {
      const auto& g = require_part(in.rope_encoder, "the finetuned encoder");
      const auto& amortizer =
          require_part(in.rope_amortizer, "the RoPE-distilled amortizer");
      const Matrix emb = g.forward(test_x);
      for (std::size_t i = 0; i < emb.rows(); ++i)
        out.posteriors.push_back(std::make_unique<FlowPosterior>(
            &amortizer, std::vector<double>{emb.row(i).begin(), emb.row(i).end()}));
      return out;
    }
  }
  throw Error("config:baselines", "unknown baseline kind");
}

}  // namespace frisbi::baselines
