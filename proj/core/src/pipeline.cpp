#include "frisbi/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "frisbi/error.hpp"
#include "frisbi/nets/adam.hpp"
#include "frisbi/ot/ot.hpp"

namespace frisbi::pipeline {

namespace {

using numeric::Matrix;
using numeric::RngStream;
using numeric::Tape;
using numeric::Var;

std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::vector<Var> push_leaves(Tape& tape, const std::vector<Matrix>& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p));
  return vars;
}

bool grads_finite(const Tape& tape, std::span<const Var> leaves) {
  for (Var v : leaves)
    if (!tape.grad(v).all_finite()) return false;
  return true;
}

void collect_grads(const Tape& tape, std::span<const Var> leaves, std::vector<Matrix>& grads) {
  grads.clear();
  for (Var v : leaves) grads.push_back(tape.grad(v));
}

// Row-softmax coupling of -cost/gamma with row mass 1/n_src; also returns
// sum_ij P_ij log P_ij for the loss constant.
void stop_gradient_plan(const Matrix& cost, double gamma, double n_src, Matrix& plan,
                        double& p_log_p) {
  const std::size_t n = cost.rows(), m = cost.cols();
  plan = Matrix(n, m);
  std::vector<double> logits(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) logits[j] = -cost(i, j) / gamma;
    const double lse = numeric::logsumexp(logits);
    for (std::size_t j = 0; j < m; ++j) {
      const double log_p = logits[j] - lse - std::log(n_src);
      const double p = std::exp(log_p);
      plan(i, j) = p;
      if (p > 0.0) p_log_p += p * log_p;
    }
  }
}

}  // namespace

TrainedNpe train_npe(const Matrix& theta, const Matrix& x, const NpeConfig& cfg,
                     const BoxDomain& box, RngStream init_rng, RngStream batch_rng) {
  if (theta.rows() == 0) throw Error("empty-request", "train_npe needs a nonempty dataset");
  TrainedNpe result;
  {
    RngStream enc_rng = init_rng.fork(0);
    RngStream flow_rng = init_rng.fork(1);
    result.nse = nets::MlpEncoder::make_default(enc_rng, x.cols());
    result.npe = nets::FlowModel::make(box, nets::kEmbedDim, flow_rng);
  }
  std::vector<Matrix> params = result.nse.params;
  params.insert(params.end(), result.npe.params.begin(), result.npe.params.end());
  const std::size_t n_enc = result.nse.params.size();
  nets::AdamState adam(params, {.lr = cfg.lr});
  std::vector<Matrix> grads;

  const std::size_t n = theta.rows();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(n, batch_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      std::span<const std::size_t> idx(order.data() + start, len);
      const Matrix xb = numeric::take_rows(x, idx);
      const Matrix tb = numeric::take_rows(theta, idx);

      Tape tape;
      auto leaves = push_leaves(tape, params);
      std::span<const Var> enc_vars(leaves.data(), n_enc);
      std::span<const Var> flow_vars(leaves.data() + n_enc, leaves.size() - n_enc);
      Var z = nets::MlpEncoder::graph(tape, enc_vars, tape.constant(xb));
      Var logq = nets::FlowModel::log_prob_graph(tape, box, flow_vars, tb, z);
      Var loss = tape.affine(tape.mean_all(logq), -1.0, 0.0);
      const double loss_value = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_value))
        throw Error("diverged", "NPE loss became non-finite");
      tape.backward(loss);
      if (!grads_finite(tape, leaves))
        throw Error("diverged", "NPE gradients became non-finite");
      collect_grads(tape, leaves, grads);
      adam.step(params, grads);
      epoch_loss += loss_value;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }

  std::copy(params.begin(), params.begin() + n_enc, result.nse.params.begin());
  std::copy(params.begin() + n_enc, params.end(), result.npe.params.begin());
  result.below_prior_entropy = result.epoch_loss.back() < box.log_volume();
  if (!result.below_prior_entropy)
    std::cerr << "[frisbi] warning: NPE final loss " << result.epoch_loss.back()
              << " not below the prior entropy level " << box.log_volume() << "\n";
  return result;
}

Var joint_loss_graph(Tape& tape, Var z_batch, Var z_calib, const Matrix& w_all,
                     const Matrix& w_calib, const JointLossConfig& cfg) {
  const std::size_t nb = tape.value(z_batch).rows();
  const std::size_t nc = tape.value(z_calib).rows();
  if (nc == 0 && cfg.lambda > 0.0)
    std::cerr << "[frisbi] warning: empty calibration set, supervised term is zero\n";

  const double n_src = static_cast<double>(nb + nc);
  Var loss = tape.constant(Matrix(1, 1, 0.0));

  if (cfg.include_ot) {
    Var atlas = tape.constant(w_all);
    double p_log_p = 0.0;
    Var cost_b = tape.sqdist_to(z_batch, atlas);
    Matrix plan_b;
    stop_gradient_plan(tape.value(cost_b), cfg.gamma, n_src, plan_b, p_log_p);
    Var ot_linear = tape.dot(cost_b, tape.constant(std::move(plan_b)));
    if (nc > 0) {
      Var cost_c = tape.sqdist_to(z_calib, atlas);
      Matrix plan_c;
      stop_gradient_plan(tape.value(cost_c), cfg.gamma, n_src, plan_c, p_log_p);
      ot_linear = tape.add(ot_linear, tape.dot(cost_c, tape.constant(std::move(plan_c))));
    }
    loss = tape.add(loss, tape.affine(ot_linear, 1.0, cfg.gamma * p_log_p));
  }

  if (nc > 0 && cfg.lambda > 0.0) {
    Var diff = tape.sub(z_calib, tape.constant(w_calib));
    Var sq_sum = tape.sum_all(tape.mul(diff, diff));
    loss = tape.add(loss, tape.affine(sq_sum, cfg.lambda / static_cast<double>(nc), 0.0));
  }
  return loss;
}

double joint_ot_soft_min_value(const Matrix& z_src, const Matrix& w_all, double gamma) {
  const Matrix cost = numeric::pairwise_sqdist(z_src, w_all);
  const std::size_t n = cost.rows(), m = cost.cols();
  std::vector<double> logits(m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) logits[j] = -cost(i, j) / gamma;
    total += numeric::logsumexp(logits);
  }
  return -gamma / static_cast<double>(n) * total - gamma * std::log(static_cast<double>(n));
}

TransferResult train_transfer(const Matrix& u_x, const Matrix& calib_xr, const Matrix& calib_xs,
                              const nets::MlpEncoder& nse, const Matrix& ot_x,
                              const JointLossConfig& cfg, RngStream batch_rng) {
  TransferResult result;
  result.encoder = nse;  // g starts from the frozen NSE

  // Simulated embeddings are cached once before the loop.
  Matrix w_all, w_calib;
  if (calib_xs.rows() > 0) w_calib = nse.forward(calib_xs);
  if (cfg.include_ot) w_all = nse.forward(numeric::stack_rows(ot_x, calib_xs));

  nets::AdamState adam(result.encoder.params, {.lr = cfg.lr});
  std::vector<Matrix> grads;
  const std::size_t n = u_x.rows();
  const std::size_t nc = calib_xr.rows();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(n, batch_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      std::span<const std::size_t> idx(order.data() + start, len);
      const Matrix xb = numeric::take_rows(u_x, idx);

      Tape tape;
      auto leaves = push_leaves(tape, result.encoder.params);
      std::span<const Var> enc_vars(leaves.data(), leaves.size());
      Var zb = nets::MlpEncoder::graph(tape, enc_vars, tape.constant(xb));
      Var zc = nc > 0 ? nets::MlpEncoder::graph(tape, enc_vars, tape.constant(calib_xr))
                      : tape.constant(Matrix(0, nets::kEmbedDim));
      Var loss = joint_loss_graph(tape, zb, zc, w_all, w_calib, cfg);
      const double loss_value = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_value)) throw Error("diverged", "joint loss became non-finite");

      if (cfg.include_ot) {
        // Soft-min value identity for the OT component, tracked every step.
        Matrix z_src = numeric::stack_rows(tape.value(zb), tape.value(zc));
        const double reference = joint_ot_soft_min_value(z_src, w_all, cfg.gamma);
        double supervised = 0.0;
        if (nc > 0 && cfg.lambda > 0.0) {
          const Matrix& zc_val = tape.value(zc);
          for (std::size_t i = 0; i < zc_val.rows(); ++i)
            for (std::size_t j = 0; j < zc_val.cols(); ++j) {
              const double d = zc_val(i, j) - w_calib(i, j);
              supervised += d * d;
            }
          supervised *= cfg.lambda / static_cast<double>(nc);
        }
        result.max_soft_min_gap =
            std::max(result.max_soft_min_gap, std::abs(loss_value - supervised - reference));
      }

      tape.backward(loss);
      if (!grads_finite(tape, leaves))
        throw Error("diverged", "joint-loss gradients became non-finite");
      collect_grads(tape, leaves, grads);
      adam.step(result.encoder.params, grads);
      epoch_loss += loss_value;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

SparseWeights floor_and_renormalize(const Matrix& alpha_rows, double floor) {
  SparseWeights out(alpha_rows.rows());
  for (std::size_t i = 0; i < alpha_rows.rows(); ++i) {
    double kept_mass = 0.0;
    for (std::size_t j = 0; j < alpha_rows.cols(); ++j)
      if (alpha_rows(i, j) >= floor) kept_mass += alpha_rows(i, j);
    if (kept_mass <= 0.0) {
      // Degenerate row: keep the single largest atom.
      std::size_t best = 0;
      for (std::size_t j = 1; j < alpha_rows.cols(); ++j)
        if (alpha_rows(i, j) > alpha_rows(i, best)) best = j;
      out[i].emplace_back(best, 1.0);
      continue;
    }
    for (std::size_t j = 0; j < alpha_rows.cols(); ++j)
      if (alpha_rows(i, j) >= floor) out[i].emplace_back(j, alpha_rows(i, j) / kept_mass);
  }
  return out;
}

AmortizeResult amortize_from_alphas(const Matrix& z_rows, const SparseWeights& alphas,
                                    const Matrix& w_atlas, const nets::FlowModel& npe,
                                    const AmortizeConfig& cfg, const BoxDomain& box,
                                    RngStream init_rng, RngStream batch_rng,
                                    RngStream sample_rng) {
  if (cfg.k == 0) throw Error("empty-request", "amortize needs k >= 1");
  AmortizeResult result;
  result.alphas = alphas;
  result.amortizer = nets::FlowModel::make(box, z_rows.cols(), init_rng);

  nets::AdamState adam(result.amortizer.params, {.lr = cfg.lr});
  std::vector<Matrix> grads;
  const std::size_t n = z_rows.rows();
  const std::size_t m = w_atlas.rows();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Redraw K posterior samples per atom for this epoch.
    RngStream epoch_rng = sample_rng.fork(epoch);
    std::vector<Matrix> atom_samples(m);
    for (std::size_t j = 0; j < m; ++j) {
      RngStream r = epoch_rng.fork(j);
      atom_samples[j] = npe.sample(w_atlas.row(j), cfg.k, r);
    }

    const auto order = shuffled_indices(n, batch_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      std::span<const std::size_t> idx(order.data() + start, len);

      std::size_t rows = 0;
      for (std::size_t b = 0; b < len; ++b) rows += alphas[idx[b]].size() * cfg.k;
      Matrix thetas(rows, kThetaDim), ctx(rows, z_rows.cols()), weights(rows, 1);
      std::size_t r = 0;
      for (std::size_t b = 0; b < len; ++b) {
        const std::size_t i = idx[b];
        for (const auto& [j, alpha] : alphas[i]) {
          for (std::size_t k = 0; k < cfg.k; ++k, ++r) {
            thetas(r, 0) = atom_samples[j](k, 0);
            thetas(r, 1) = atom_samples[j](k, 1);
            for (std::size_t c = 0; c < ctx.cols(); ++c) ctx(r, c) = z_rows(i, c);
            weights(r, 0) = alpha / (static_cast<double>(cfg.k) * static_cast<double>(len));
          }
        }
      }

      Tape tape;
      auto leaves = push_leaves(tape, result.amortizer.params);
      Var logq = nets::FlowModel::log_prob_graph(tape, box, leaves, thetas,
                                                 tape.constant(std::move(ctx)));
      Var loss = tape.affine(tape.dot(logq, tape.constant(std::move(weights))), -1.0, 0.0);
      const double loss_value = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_value)) throw Error("diverged", "amortizer loss became non-finite");
      tape.backward(loss);
      if (!grads_finite(tape, leaves))
        throw Error("diverged", "amortizer gradients became non-finite");
      collect_grads(tape, leaves, grads);
      adam.step(result.amortizer.params, grads);
      epoch_loss += loss_value;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));

    if (epoch == 9 && result.epoch_loss[9] >= result.epoch_loss[0]) {
      result.not_learning = true;
      std::cerr << "[frisbi] warning: amortizer-not-learning (loss did not decrease over the "
                   "first 10 epochs)\n";
    }
  }
  return result;
}

AmortizeResult amortize(const Matrix& z_u, const Matrix& w_atlas, const nets::FlowModel& npe,
                        const AmortizeConfig& cfg, double gamma, const BoxDomain& box,
                        RngStream init_rng, RngStream batch_rng, RngStream sample_rng) {
  Matrix alpha(z_u.rows(), w_atlas.rows());
  for (std::size_t i = 0; i < z_u.rows(); ++i) {
    const auto row = ot::mixture_weights(z_u.row(i), w_atlas, gamma);
    for (std::size_t j = 0; j < row.size(); ++j) alpha(i, j) = row[j];
  }
  return amortize_from_alphas(z_u, floor_and_renormalize(alpha, cfg.weight_floor), w_atlas, npe,
                              cfg, box, init_rng, batch_rng, sample_rng);
}

InferResult infer(std::span<const double> x_r, const TrainedPipeline& pipe,
                  std::size_t n_samples, RngStream rng) {
  InferResult out;
  out.embedding = pipe.real_encoder.encode(x_r);
  out.samples = pipe.amortizer.sample(out.embedding, n_samples, rng);
  const nets::FlowModel* amortizer = &pipe.amortizer;
  std::vector<double> z = out.embedding;
  out.log_prob = [amortizer, z](std::span<const double> theta) {
    return amortizer->log_prob(theta, z);
  };
  return out;
}

}  // namespace frisbi::pipeline
