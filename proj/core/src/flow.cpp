#include "frisbi/nets/flow.hpp"

#include <algorithm>
#include <cmath>

#include "frisbi/error.hpp"

namespace frisbi::nets {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double logit(double u) { return std::log(u) - std::log1p(-u); }
double sigmoid(double y) { return 1.0 / (1.0 + std::exp(-y)); }

// Dense conditioner forward over a batch: in (n x (1+ctx)) -> shift, log_scale (n).
void conditioner(const std::vector<numeric::Matrix>& params, std::size_t coupling,
                 const numeric::Matrix& cond_in, std::vector<double>& shift,
                 std::vector<double>& log_scale) {
  const std::size_t base = coupling * 6;
  const numeric::Matrix& v1 = params[base + 0];
  const numeric::Matrix& c1 = params[base + 1];
  const numeric::Matrix& v2 = params[base + 2];
  const numeric::Matrix& c2 = params[base + 3];
  const numeric::Matrix& v3 = params[base + 4];
  const numeric::Matrix& c3 = params[base + 5];

  numeric::Matrix h1 = numeric::matmul(cond_in, v1);
  for (std::size_t i = 0; i < h1.rows(); ++i)
    for (std::size_t j = 0; j < h1.cols(); ++j) {
      h1(i, j) += c1(0, j);
      if (h1(i, j) < 0.0) h1(i, j) = 0.0;
    }
  numeric::Matrix h2 = numeric::matmul(h1, v2);
  for (std::size_t i = 0; i < h2.rows(); ++i)
    for (std::size_t j = 0; j < h2.cols(); ++j) {
      h2(i, j) += c2(0, j);
      if (h2(i, j) < 0.0) h2(i, j) = 0.0;
    }
  numeric::Matrix out = numeric::matmul(h2, v3);
  const std::size_t n = cond_in.rows();
  shift.resize(n);
  log_scale.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    shift[i] = out(i, 0) + c3(0, 0);
    const double raw = out(i, 1) + c3(0, 1);
    log_scale[i] = FlowModel::kLogScaleBound * std::tanh(raw / FlowModel::kLogScaleBound);
  }
}

numeric::Matrix broadcast_ctx(const numeric::Matrix& ctx, std::size_t n) {
  if (ctx.rows() == n) return ctx;
  if (ctx.rows() != 1) throw Error("shape", "ctx must have 1 row or one row per theta");
  numeric::Matrix out(n, ctx.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < ctx.cols(); ++j) out(i, j) = ctx(0, j);
  return out;
}

numeric::Matrix make_cond_in(const numeric::Matrix& y, std::size_t keep,
                             const numeric::Matrix& ctx) {
  numeric::Matrix cond(y.rows(), 1 + ctx.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    cond(i, 0) = y(i, keep);
    for (std::size_t j = 0; j < ctx.cols(); ++j) cond(i, 1 + j) = ctx(i, j);
  }
  return cond;
}

}  // namespace

FlowModel FlowModel::make(const BoxDomain& box, std::size_t ctx_dim, numeric::RngStream& rng) {
  FlowModel f;
  f.box = box;
  f.ctx_dim = ctx_dim;
  const std::size_t in_dim = 1 + ctx_dim;
  for (std::size_t l = 0; l < kCouplings; ++l) {
    const double bound1 = std::sqrt(6.0 / static_cast<double>(in_dim));
    numeric::Matrix v1(in_dim, kHidden);
    for (double& x : v1.flat()) x = rng.uniform(-bound1, bound1);
    f.params.push_back(std::move(v1));
    f.params.emplace_back(1, kHidden, 0.0);
    const double bound2 = std::sqrt(6.0 / static_cast<double>(kHidden));
    numeric::Matrix v2(kHidden, kHidden);
    for (double& x : v2.flat()) x = rng.uniform(-bound2, bound2);
    f.params.push_back(std::move(v2));
    f.params.emplace_back(1, kHidden, 0.0);
    f.params.emplace_back(kHidden, 2, 0.0);  // zero: identity flow at init
    f.params.emplace_back(1, 2, 0.0);
  }
  return f;
}

void FlowModel::pre_transform(const BoxDomain& box, const numeric::Matrix& thetas,
                              numeric::Matrix& y, numeric::Matrix& log_jac) {
  const std::size_t n = thetas.rows();
  y = numeric::Matrix(n, kThetaDim);
  log_jac = numeric::Matrix(n, 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!box.strictly_inside(thetas.row(i)))
      throw Error("support", "theta on or outside the prior box boundary");
    for (std::size_t d = 0; d < kThetaDim; ++d) {
      const double u = (thetas(i, d) - box.lo[d]) / box.range(d);
      y(i, d) = logit(u);
      // d logit(u)/d theta = 1 / (range * u * (1-u))
      log_jac(i, 0) += -std::log(box.range(d)) - std::log(u) - std::log1p(-u);
    }
  }
}

numeric::Matrix FlowModel::log_prob_rows(const numeric::Matrix& thetas,
                                         const numeric::Matrix& ctx_in) const {
  const std::size_t n = thetas.rows();
  const numeric::Matrix ctx = broadcast_ctx(ctx_in, n);
  numeric::Matrix y, acc;
  pre_transform(box, thetas, y, acc);
  std::vector<double> shift, log_scale;
  for (std::size_t l = 0; l < kCouplings; ++l) {
    const std::size_t t = l % 2, keep = 1 - t;
    conditioner(params, l, make_cond_in(y, keep, ctx), shift, log_scale);
    for (std::size_t i = 0; i < n; ++i) {
      y(i, t) = y(i, t) * std::exp(log_scale[i]) + shift[i];
      acc(i, 0) += log_scale[i];
    }
  }
  numeric::Matrix out(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    out(i, 0) = -kLog2Pi - 0.5 * (y(i, 0) * y(i, 0) + y(i, 1) * y(i, 1)) + acc(i, 0);
  return out;
}

double FlowModel::log_prob(std::span<const double> theta, std::span<const double> ctx) const {
  numeric::Matrix t = numeric::Matrix::row_vector(theta);
  numeric::Matrix c = numeric::Matrix::row_vector(ctx);
  return log_prob_rows(t, c)(0, 0);
}

numeric::Matrix FlowModel::to_latent(const numeric::Matrix& thetas,
                                     const numeric::Matrix& ctx_in) const {
  const std::size_t n = thetas.rows();
  const numeric::Matrix ctx = broadcast_ctx(ctx_in, n);
  numeric::Matrix y, acc;
  pre_transform(box, thetas, y, acc);
  std::vector<double> shift, log_scale;
  for (std::size_t l = 0; l < kCouplings; ++l) {
    const std::size_t t = l % 2, keep = 1 - t;
    conditioner(params, l, make_cond_in(y, keep, ctx), shift, log_scale);
    for (std::size_t i = 0; i < n; ++i) y(i, t) = y(i, t) * std::exp(log_scale[i]) + shift[i];
  }
  return y;
}

numeric::Matrix FlowModel::from_latent(const numeric::Matrix& latent,
                                       const numeric::Matrix& ctx_in) const {
  const std::size_t n = latent.rows();
  const numeric::Matrix ctx = broadcast_ctx(ctx_in, n);
  numeric::Matrix y = latent;
  std::vector<double> shift, log_scale;
  for (std::size_t l = kCouplings; l-- > 0;) {
    const std::size_t t = l % 2, keep = 1 - t;
    conditioner(params, l, make_cond_in(y, keep, ctx), shift, log_scale);
    for (std::size_t i = 0; i < n; ++i)
      y(i, t) = (y(i, t) - shift[i]) * std::exp(-log_scale[i]);
  }
  numeric::Matrix thetas(n, kThetaDim);
  // Clamp away from the unit edges so extreme latents still land strictly
  // inside the box (sigmoid saturates to exactly 0/1 past |y| ~ 37).
  constexpr double kEdge = 1e-12;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < kThetaDim; ++d) {
      const double u = std::min(1.0 - kEdge, std::max(kEdge, sigmoid(y(i, d))));
      thetas(i, d) = box.lo[d] + box.range(d) * u;
    }
  return thetas;
}

numeric::Matrix FlowModel::sample_rows(const numeric::Matrix& ctx,
                                       numeric::RngStream& rng) const {
  numeric::Matrix z(ctx.rows(), kThetaDim);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t d = 0; d < kThetaDim; ++d) z(i, d) = rng.normal();
  return from_latent(z, ctx);
}

numeric::Matrix FlowModel::sample(std::span<const double> ctx, std::size_t n,
                                  numeric::RngStream& rng) const {
  numeric::Matrix rows(n, ctx.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < ctx.size(); ++j) rows(i, j) = ctx[j];
  return sample_rows(rows, rng);
}

numeric::Var FlowModel::log_prob_graph(numeric::Tape& tape, const BoxDomain& box,
                                       std::span<const numeric::Var> params,
                                       const numeric::Matrix& thetas, numeric::Var ctx) {
  const std::size_t n = thetas.rows();
  if (tape.value(ctx).rows() != n) throw Error("shape", "ctx rows must match theta rows");
  numeric::Matrix y0c(n, 1), y1c(n, 1), y, logj;
  pre_transform(box, thetas, y, logj);
  for (std::size_t i = 0; i < n; ++i) {
    y0c(i, 0) = y(i, 0);
    y1c(i, 0) = y(i, 1);
  }
  numeric::Var y0 = tape.constant(std::move(y0c));
  numeric::Var y1 = tape.constant(std::move(y1c));
  numeric::Var acc = tape.constant(std::move(logj));
  for (std::size_t l = 0; l < kCouplings; ++l) {
    const std::size_t t = l % 2;
    const std::size_t base = l * 6;
    numeric::Var keep_col = (t == 0) ? y1 : y0;
    numeric::Var cond = tape.hstack2(keep_col, ctx);
    numeric::Var h1 =
        tape.relu(tape.add_row_broadcast(tape.matmul(cond, params[base + 0]), params[base + 1]));
    numeric::Var h2 =
        tape.relu(tape.add_row_broadcast(tape.matmul(h1, params[base + 2]), params[base + 3]));
    numeric::Var out = tape.add_row_broadcast(tape.matmul(h2, params[base + 4]), params[base + 5]);
    numeric::Var shift = tape.column(out, 0);
    numeric::Var raw = tape.column(out, 1);
    numeric::Var s = tape.affine(tape.tanh_act(tape.affine(raw, 1.0 / kLogScaleBound, 0.0)),
                                 kLogScaleBound, 0.0);
    numeric::Var transformed = tape.add(tape.mul((t == 0) ? y0 : y1, tape.exp_elem(s)), shift);
    if (t == 0)
      y0 = transformed;
    else
      y1 = transformed;
    acc = tape.add(acc, s);
  }
  numeric::Var sq = tape.add(tape.mul(y0, y0), tape.mul(y1, y1));
  numeric::Var base_lp = tape.affine(sq, -0.5, -kLog2Pi);
  return tape.add(base_lp, acc);
}

}  // namespace frisbi::nets
