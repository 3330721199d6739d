#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "frisbi/domain.hpp"
#include "frisbi/nets/flow.hpp"
#include "frisbi/nets/mlp.hpp"
#include "frisbi/numeric/matrix.hpp"
#include "frisbi/numeric/rng.hpp"
#include "frisbi/numeric/tape.hpp"

namespace frisbi::pipeline {

struct NpeConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  double lr = 1e-3;
};

struct JointLossConfig {
  double gamma = 0.5;
  double lambda = 1.0;
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  double lr = 1e-3;
  /// rope_finetune is this loss with the entropic-OT component switched off.
  bool include_ot = true;
};

struct AmortizeConfig {
  std::size_t k = 8;              // samples per mixture atom
  double weight_floor = 1e-6;     // drop atoms with alpha below this, renormalize
  std::size_t batch_size = 128;
  std::size_t epochs = 40;
  double lr = 1e-3;
};

struct TrainedNpe {
  nets::MlpEncoder nse;
  nets::FlowModel npe;
  std::vector<double> epoch_loss;
  bool below_prior_entropy = false;
};

/// Stage 0: jointly fit the statistics encoder and the posterior flow by
/// minibatch Adam on the mean negative log-density of theta given the encoded
/// simulation. Throws Error("diverged") on NaN with parameters left at the
/// last finite state.
TrainedNpe train_npe(const numeric::Matrix& theta, const numeric::Matrix& x,
                     const NpeConfig& cfg, const BoxDomain& box, numeric::RngStream init_rng,
                     numeric::RngStream batch_rng);

/// Stage-1 objective on the tape. The coupling is the closed-form plan of the
/// current costs with gradient stopped through it (envelope theorem); the
/// supervised term is the MSE over all calibration pairs.
/// z_batch: encoded unpaired reals of the minibatch; z_calib: encoded
/// calibration reals (all of them); w_all: simulated atlas embeddings
/// (D_OT plus calibration sims); w_calib: embeddings of the paired sims.
numeric::Var joint_loss_graph(numeric::Tape& tape, numeric::Var z_batch, numeric::Var z_calib,
                              const numeric::Matrix& w_all, const numeric::Matrix& w_calib,
                              const JointLossConfig& cfg);

/// Value of the OT component via the soft-min identity,
/// -(gamma/n) sum_i lse_j(-C_ij/gamma) - gamma log n; equals the plan-based
/// value up to roundoff and anchors the per-epoch identity check.
double joint_ot_soft_min_value(const numeric::Matrix& z_src, const numeric::Matrix& w_all,
                               double gamma);

struct TransferResult {
  nets::MlpEncoder encoder;
  std::vector<double> epoch_loss;
  /// Largest observed gap between the plan-based OT value and the soft-min
  /// identity across all steps.
  double max_soft_min_gap = 0.0;
};

/// Stage 1: starts the real encoder from the frozen NSE, caches the simulated
/// atlas once, then runs epochs x batches of Adam on joint_loss_graph.
TransferResult train_transfer(const numeric::Matrix& u_x, const numeric::Matrix& calib_xr,
                              const numeric::Matrix& calib_xs, const nets::MlpEncoder& nse,
                              const numeric::Matrix& ot_x, const JointLossConfig& cfg,
                              numeric::RngStream batch_rng);

using SparseWeights = std::vector<std::vector<std::pair<std::size_t, double>>>;

/// Applies the weight floor per row and renormalizes the survivors.
SparseWeights floor_and_renormalize(const numeric::Matrix& alpha_rows, double floor);

struct AmortizeResult {
  nets::FlowModel amortizer;
  std::vector<double> epoch_loss;
  bool not_learning = false;
  SparseWeights alphas;
};

/// Stage 2 core: distill the per-row posterior mixtures (atoms = NPE
/// conditioned on atlas embeddings, weights = alphas) into a fresh
/// conditional flow on the real embeddings. Atom samples are redrawn each
/// epoch.
AmortizeResult amortize_from_alphas(const numeric::Matrix& z_rows, const SparseWeights& alphas,
                                    const numeric::Matrix& w_atlas, const nets::FlowModel& npe,
                                    const AmortizeConfig& cfg, const BoxDomain& box,
                                    numeric::RngStream init_rng, numeric::RngStream batch_rng,
                                    numeric::RngStream sample_rng);

/// Stage 2 with the closed-form weights alpha_ij = softmax_j(-||z_i - w_j||^2 / gamma).
AmortizeResult amortize(const numeric::Matrix& z_u, const numeric::Matrix& w_atlas,
                        const nets::FlowModel& npe, const AmortizeConfig& cfg, double gamma,
                        const BoxDomain& box, numeric::RngStream init_rng,
                        numeric::RngStream batch_rng, numeric::RngStream sample_rng);

/// Everything inference needs. nse/npe are frozen after Stage 0 and never
/// mutated by later stages.
struct TrainedPipeline {
  nets::MlpEncoder nse;
  nets::FlowModel npe;
  nets::MlpEncoder real_encoder;
  nets::FlowModel amortizer;
  numeric::Matrix sim_embeddings;  // cached atlas (D_OT plus calib sims through nse)
  double gamma = 0.5;
};

struct InferResult {
  std::vector<double> embedding;
  numeric::Matrix samples;
  std::function<double(std::span<const double>)> log_prob;
};

/// Amortized inference for one observation: embeds with the trained real
/// encoder and queries only the amortizer — no simulation data involved.
InferResult infer(std::span<const double> x_r, const TrainedPipeline& pipe,
                  std::size_t n_samples, numeric::RngStream rng);

}  // namespace frisbi::pipeline
