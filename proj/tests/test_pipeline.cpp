#include <doctest.h>

#include <cmath>
#include <vector>

#include "frisbi/error.hpp"
#include "frisbi/nets/checkpoint.hpp"
#include "frisbi/ot/ot.hpp"
#include "frisbi/pipeline/pipeline.hpp"
#include "frisbi/simulate/datasets.hpp"
#include "oracles.hpp"

using namespace frisbi;
using numeric::Matrix;
using numeric::RngStream;
using numeric::Tape;
using numeric::Var;

namespace {

sim::DatasetBundle tiny_bundle(std::uint64_t seed = 77) {
  sim::BundleSizes sizes{96, 64, 48, 24, 12};
  return sim::make_bundle(sizes, 0.01, seed);
}

constexpr double kAnalyticInitLoss = 4.004991636706717;

}  // namespace

TEST_CASE("joint loss: symmetric point has zero gradient") {
  // lambda = 0, single 1-d embedding at 0.5 between atoms {0, 1}
  Tape tape;
  Var z = tape.leaf(Matrix(1, 1, 0.5));
  Var zc = tape.constant(Matrix(0, 1));
  Matrix atoms = Matrix::from_rows({{0.0}, {1.0}});
  pipeline::JointLossConfig cfg;
  cfg.gamma = 1.0;
  cfg.lambda = 0.0;
  Var loss = pipeline::joint_loss_graph(tape, z, zc, atoms, Matrix(0, 1), cfg);
  tape.backward(loss);
  CHECK(std::abs(tape.grad(z)(0, 0)) < 1e-14);
}

TEST_CASE("joint loss: envelope gradient matches finite differences of the soft-min form") {
  RngStream rng(3, numeric::StreamId::kTest);
  const std::size_t nb = 5, nc = 3, m = 7, d = 4;
  Matrix w_all(m, d), w_calib(nc, d);
  for (double& v : w_all.flat()) v = rng.uniform(-1.0, 1.0);
  for (double& v : w_calib.flat()) v = rng.uniform(-1.0, 1.0);
  std::vector<Matrix> params{Matrix(nb, d), Matrix(nc, d)};
  for (auto& m2 : params)
    for (double& v : m2.flat()) v = rng.uniform(-1.0, 1.0);

  pipeline::JointLossConfig cfg;
  cfg.gamma = 0.5;
  cfg.lambda = 0.7;

  // Substituted objective: soft-min OT value plus the supervised MSE.
  auto substituted = [&](const std::vector<Matrix>& ps) {
    Matrix z_src = numeric::stack_rows(ps[0], ps[1]);
    double value = pipeline::joint_ot_soft_min_value(z_src, w_all, cfg.gamma);
    double mse = 0.0;
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = ps[1](i, j) - w_calib(i, j);
        mse += diff * diff;
      }
    return value + cfg.lambda * mse / static_cast<double>(nc);
  };

  Tape tape;
  Var zb = tape.leaf(params[0]);
  Var zc = tape.leaf(params[1]);
  Var loss = pipeline::joint_loss_graph(tape, zb, zc, w_all, w_calib, cfg);
  // value identity: stop-gradient formulation equals the substituted form
  CHECK(tape.value(loss)(0, 0) == doctest::Approx(substituted(params)).epsilon(1e-10));
  tape.backward(loss);
  std::vector<Matrix> grads{tape.grad(zb), tape.grad(zc)};
  auto report = oracles::finite_difference_check(params, substituted, grads, 1e-5, 1000);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("joint loss: perfect calibration embeddings zero the supervised term") {
  RngStream rng(4, numeric::StreamId::kTest);
  Matrix w_all(5, 3), w_calib(2, 3), zb(3, 3);
  for (double& v : w_all.flat()) v = rng.uniform(-1.0, 1.0);
  for (double& v : w_calib.flat()) v = rng.uniform(-1.0, 1.0);
  for (double& v : zb.flat()) v = rng.uniform(-1.0, 1.0);

  pipeline::JointLossConfig with_sup;
  with_sup.gamma = 0.5;
  with_sup.lambda = 5.0;
  pipeline::JointLossConfig no_sup = with_sup;
  no_sup.lambda = 0.0;

  Tape t1;
  Var loss1 =
      pipeline::joint_loss_graph(t1, t1.leaf(zb), t1.leaf(w_calib), w_all, w_calib, with_sup);
  Tape t2;
  Var loss2 =
      pipeline::joint_loss_graph(t2, t2.leaf(zb), t2.leaf(w_calib), w_all, w_calib, no_sup);
  CHECK(t1.value(loss1)(0, 0) == t2.value(loss2)(0, 0));
}

TEST_CASE("train_npe: analytic init loss, learning below prior entropy, determinism") {
  const auto box = sim::pendulum_prior_box();
  sim::BundleSizes sizes{512, 2, 2, 2, 2};
  auto bundle = sim::make_bundle(sizes, 0.01, 11);

  // Mean -log q at the identity-init flow over prior draws.
  {
    RngStream enc_rng = RngStream(1, numeric::StreamId::kInitNse).fork(0);
    RngStream flow_rng = RngStream(1, numeric::StreamId::kInitNse).fork(1);
    auto nse = nets::MlpEncoder::make_default(enc_rng);
    auto npe = nets::FlowModel::make(box, nets::kEmbedDim, flow_rng);
    Matrix ctx = nse.forward(bundle.sbi_x);
    Matrix lp = npe.log_prob_rows(bundle.sbi_theta, ctx);
    double loss = 0.0;
    for (double v : lp.flat()) loss -= v;
    loss /= static_cast<double>(lp.size());
    CHECK(loss == doctest::Approx(kAnalyticInitLoss).epsilon(0.5 / kAnalyticInitLoss));
  }

  pipeline::NpeConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 30;
  auto trained = pipeline::train_npe(bundle.sbi_theta, bundle.sbi_x, cfg, box,
                                     RngStream(1, numeric::StreamId::kInitNse),
                                     RngStream(1, numeric::StreamId::kBatchNpe));
  CHECK(trained.epoch_loss.back() < trained.epoch_loss.front());
  // must beat the uniform-prior density level log(0.9 pi * 2 pi)
  CHECK(trained.epoch_loss.back() < box.log_volume());
  CHECK(trained.below_prior_entropy);

  auto again = pipeline::train_npe(bundle.sbi_theta, bundle.sbi_x, cfg, box,
                                   RngStream(1, numeric::StreamId::kInitNse),
                                   RngStream(1, numeric::StreamId::kBatchNpe));
  CHECK(again.epoch_loss.back() == trained.epoch_loss.back());
  CHECK(nets::params_hash(again.nse.params) == nets::params_hash(trained.nse.params));
  CHECK(nets::params_hash(again.npe.params) == nets::params_hash(trained.npe.params));
}

TEST_CASE("train_transfer: dominant supervised term, entropy dominance, determinism") {
  const auto box = sim::pendulum_prior_box();
  auto bundle = tiny_bundle();
  RngStream nse_rng(9, numeric::StreamId::kInitNse);
  auto nse = nets::MlpEncoder::make_default(nse_rng);

  SUBCASE("huge lambda drives the calibration MSE to zero") {
    pipeline::JointLossConfig cfg;
    cfg.gamma = 0.5;
    cfg.lambda = 1e6;
    cfg.batch_size = 32;
    cfg.epochs = 400;
    cfg.lr = 3e-3;
    auto result =
        pipeline::train_transfer(bundle.u_x, bundle.calib_xr, bundle.calib_xs, nse, bundle.ot_x,
                                 cfg, RngStream(2, numeric::StreamId::kBatchTransfer));
    const Matrix zc = result.encoder.forward(bundle.calib_xr);
    const Matrix wc = nse.forward(bundle.calib_xs);
    double mse = 0.0;
    for (std::size_t i = 0; i < zc.size(); ++i) {
      const double d = zc.flat()[i] - wc.flat()[i];
      mse += d * d;
    }
    mse /= static_cast<double>(zc.rows());
    CHECK(mse < 1e-2);
    // the soft-min identity held throughout training
    CHECK(result.max_soft_min_gap < 1e-8);
    // epoch-average loss decreases (coarse 5-epoch moving average)
    double head = 0.0, tail = 0.0;
    for (int e = 0; e < 5; ++e) {
      head += result.epoch_loss[e];
      tail += result.epoch_loss[result.epoch_loss.size() - 1 - e];
    }
    CHECK(tail < head);
  }

  SUBCASE("huge gamma pushes the plan entropy to the uniform level") {
    pipeline::JointLossConfig cfg;
    cfg.gamma = 1e3;
    cfg.lambda = 1.0;
    cfg.batch_size = 64;
    cfg.epochs = 3;
    auto result =
        pipeline::train_transfer(bundle.u_x, bundle.calib_xr, bundle.calib_xs, nse, bundle.ot_x,
                                 cfg, RngStream(3, numeric::StreamId::kBatchTransfer));
    const Matrix z = result.encoder.forward(bundle.u_x);
    const Matrix atlas = nse.forward(numeric::stack_rows(bundle.ot_x, bundle.calib_xs));
    const Matrix cost = numeric::pairwise_sqdist(z, atlas);
    auto plan = ot::closed_form_plan(cost, cfg.gamma);
    const double uniform_entropy =
        std::log(static_cast<double>(plan.p.rows() * plan.p.cols()));
    CHECK(std::abs(ot::plan_entropy(plan.p) - uniform_entropy) < 1e-3);
  }

  SUBCASE("identical seed and config reproduce bit-identical weights") {
    pipeline::JointLossConfig cfg;
    cfg.batch_size = 32;
    cfg.epochs = 4;
    auto r1 = pipeline::train_transfer(bundle.u_x, bundle.calib_xr, bundle.calib_xs, nse,
                                       bundle.ot_x, cfg,
                                       RngStream(4, numeric::StreamId::kBatchTransfer));
    auto r2 = pipeline::train_transfer(bundle.u_x, bundle.calib_xr, bundle.calib_xs, nse,
                                       bundle.ot_x, cfg,
                                       RngStream(4, numeric::StreamId::kBatchTransfer));
    CHECK(nets::params_hash(r1.encoder.params) == nets::params_hash(r2.encoder.params));
  }

  SUBCASE("encoder starts bit-identical to the NSE") {
    pipeline::JointLossConfig cfg;
    cfg.epochs = 0;
    auto r = pipeline::train_transfer(bundle.u_x, bundle.calib_xr, bundle.calib_xs, nse,
                                      bundle.ot_x, cfg,
                                      RngStream(5, numeric::StreamId::kBatchTransfer));
    CHECK(nets::params_hash(r.encoder.params) == nets::params_hash(nse.params));
    CHECK(numeric::max_abs_diff(r.encoder.forward(bundle.u_x), nse.forward(bundle.u_x)) == 0.0);
  }
}

TEST_CASE("floor_and_renormalize keeps unit mass") {
  RngStream rng(6, numeric::StreamId::kTest);
  Matrix alpha(10, 20);
  for (std::size_t i = 0; i < 10; ++i) {
    std::vector<double> logits(20);
    for (auto& v : logits) v = rng.uniform(-12.0, 3.0);
    const double lse = numeric::logsumexp(logits);
    for (std::size_t j = 0; j < 20; ++j) alpha(i, j) = std::exp(logits[j] - lse);
  }
  auto kept = pipeline::floor_and_renormalize(alpha, 1e-3);
  for (const auto& row : kept) {
    double sum = 0.0;
    for (const auto& [j, a] : row) {
      CHECK(a > 0.0);
      sum += a;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("amortize: single atom distills the NPE posterior") {
  const auto box = sim::pendulum_prior_box();
  RngStream flow_rng(7, numeric::StreamId::kTest);
  auto npe = nets::FlowModel::make(box, nets::kEmbedDim, flow_rng);
  // give the target posterior some structure
  for (std::size_t l = 0; l < nets::FlowModel::kCouplings; ++l)
    for (double& v : npe.params[l * 6 + 4].flat()) v = flow_rng.uniform(-0.2, 0.2);

  Matrix atlas(1, nets::kEmbedDim);
  for (double& v : atlas.flat()) v = flow_rng.uniform(-0.5, 0.5);
  Matrix z_rows(8, nets::kEmbedDim);
  for (double& v : z_rows.flat()) v = flow_rng.uniform(-0.5, 0.5);

  pipeline::AmortizeConfig cfg;
  cfg.k = 32;
  cfg.batch_size = 8;
  cfg.epochs = 160;
  auto result = pipeline::amortize(z_rows, atlas, npe, cfg, 0.5, box,
                                   RngStream(8, numeric::StreamId::kInitAmortizer),
                                   RngStream(8, numeric::StreamId::kBatchAmortize),
                                   RngStream(8, numeric::StreamId::kFlowSampleAmortize));
  // alpha must be exactly [1]
  for (const auto& row : result.alphas) {
    REQUIRE(row.size() == 1);
    CHECK(row[0].second == 1.0);
  }
  CHECK_FALSE(result.not_learning);

  // KL(q_psi || q_xi) estimated by sampling from the NPE atom
  RngStream sample_rng(9, numeric::StreamId::kTest);
  Matrix draws = npe.sample(atlas.row(0), 2048, sample_rng);
  Matrix lp_npe = npe.log_prob_rows(draws, atlas);
  Matrix lp_am = result.amortizer.log_prob_rows(draws, Matrix::row_vector(z_rows.row(0)));
  double kl = 0.0;
  for (std::size_t i = 0; i < draws.rows(); ++i) kl += lp_npe(i, 0) - lp_am(i, 0);
  kl /= static_cast<double>(draws.rows());
  CHECK(kl < 0.1);
}

TEST_CASE("amortize alphas match mixture_weights exactly") {
  const auto box = sim::pendulum_prior_box();
  RngStream rng(10, numeric::StreamId::kTest);
  auto npe = nets::FlowModel::make(box, nets::kEmbedDim, rng);
  Matrix atlas(6, nets::kEmbedDim), z_rows(4, nets::kEmbedDim);
  for (double& v : atlas.flat()) v = rng.uniform(-1.0, 1.0);
  for (double& v : z_rows.flat()) v = rng.uniform(-1.0, 1.0);

  pipeline::AmortizeConfig cfg;
  cfg.k = 2;
  cfg.epochs = 1;
  cfg.weight_floor = 1e-6;
  auto result = pipeline::amortize(z_rows, atlas, npe, cfg, 0.5, box,
                                   RngStream(11, numeric::StreamId::kInitAmortizer),
                                   RngStream(11, numeric::StreamId::kBatchAmortize),
                                   RngStream(11, numeric::StreamId::kFlowSampleAmortize));
  // the stage-2 table is the floored/renormalized mixture_weights output,
  // bit for bit
  Matrix reference(z_rows.rows(), atlas.rows());
  for (std::size_t i = 0; i < z_rows.rows(); ++i) {
    auto expected = ot::mixture_weights(z_rows.row(i), atlas, 0.5);
    for (std::size_t j = 0; j < expected.size(); ++j) reference(i, j) = expected[j];
  }
  auto expected_kept = pipeline::floor_and_renormalize(reference, cfg.weight_floor);
  REQUIRE(result.alphas.size() == expected_kept.size());
  for (std::size_t i = 0; i < z_rows.rows(); ++i) {
    REQUIRE(result.alphas[i].size() == expected_kept[i].size());
    double total = 0.0;
    for (std::size_t t = 0; t < result.alphas[i].size(); ++t) {
      CHECK(result.alphas[i][t].first == expected_kept[i][t].first);
      CHECK(result.alphas[i][t].second == expected_kept[i][t].second);
      total += result.alphas[i][t].second;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("infer: in-box samples, determinism, log_prob consistency") {
  const auto box = sim::pendulum_prior_box();
  RngStream rng(12, numeric::StreamId::kTest);
  pipeline::TrainedPipeline pipe;
  pipe.nse = nets::MlpEncoder::make_default(rng);
  pipe.npe = nets::FlowModel::make(box, nets::kEmbedDim, rng);
  pipe.real_encoder = pipe.nse;
  pipe.amortizer = nets::FlowModel::make(box, nets::kEmbedDim, rng);
  for (std::size_t l = 0; l < nets::FlowModel::kCouplings; ++l)
    for (double& v : pipe.amortizer.params[l * 6 + 4].flat()) v = rng.uniform(-0.2, 0.2);

  std::vector<double> x(100);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);

  auto r1 = pipeline::infer(x, pipe, 64, RngStream(13, numeric::StreamId::kEvalSampling));
  auto r2 = pipeline::infer(x, pipe, 64, RngStream(13, numeric::StreamId::kEvalSampling));
  CHECK(numeric::max_abs_diff(r1.samples, r2.samples) == 0.0);
  for (std::size_t i = 0; i < r1.samples.rows(); ++i) {
    CHECK(box.strictly_inside(r1.samples.row(i)));
    CHECK(r1.log_prob(r1.samples.row(i)) ==
          pipe.amortizer.log_prob(r1.samples.row(i), r1.embedding));
  }
}

TEST_CASE("stage-1 and stage-2 never mutate the frozen NSE/NPE") {
  const auto box = sim::pendulum_prior_box();
  auto bundle = tiny_bundle(31);
  pipeline::NpeConfig npe_cfg;
  npe_cfg.batch_size = 48;
  npe_cfg.epochs = 4;
  auto stage0 = pipeline::train_npe(bundle.sbi_theta, bundle.sbi_x, npe_cfg, box,
                                    RngStream(14, numeric::StreamId::kInitNse),
                                    RngStream(14, numeric::StreamId::kBatchNpe));
  const std::string nse_hash = nets::params_hash(stage0.nse.params);
  const std::string npe_hash = nets::params_hash(stage0.npe.params);

  pipeline::JointLossConfig joint_cfg;
  joint_cfg.batch_size = 32;
  joint_cfg.epochs = 3;
  auto stage1 = pipeline::train_transfer(bundle.u_x, bundle.calib_xr, bundle.calib_xs,
                                         stage0.nse, bundle.ot_x, joint_cfg,
                                         RngStream(14, numeric::StreamId::kBatchTransfer));
  const Matrix z_u = stage1.encoder.forward(bundle.u_x);
  const Matrix atlas = stage0.nse.forward(numeric::stack_rows(bundle.ot_x, bundle.calib_xs));
  pipeline::AmortizeConfig am_cfg;
  am_cfg.epochs = 2;
  am_cfg.k = 2;
  (void)pipeline::amortize(z_u, atlas, stage0.npe, am_cfg, 0.5, box,
                           RngStream(14, numeric::StreamId::kInitAmortizer),
                           RngStream(14, numeric::StreamId::kBatchAmortize),
                           RngStream(14, numeric::StreamId::kFlowSampleAmortize));

  CHECK(nets::params_hash(stage0.nse.params) == nse_hash);
  CHECK(nets::params_hash(stage0.npe.params) == npe_hash);
}
