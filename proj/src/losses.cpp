#include "gazekit/losses.hpp"

#include <cmath>

namespace gazekit {

namespace {

double vec_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

Tensor direction_loss(Tape* tape, const Tensor& g_hat, const Tensor& g, const LossWeights& w) {
  if (g_hat.rank() != 1 || g_hat.dim(0) != 3 || g.rank() != 1 || g.dim(0) != 3)
    throw ShapeError("direction_loss: expects 3-vectors");
  if (std::fabs(vec_norm(g_hat.values()) - 1.0) > 1e-6 ||
      std::fabs(vec_norm(g.values()) - 1.0) > 1e-6)
    throw ValueError("direction_loss: inputs must be unit vectors");
  const Tensor cos_term = add_scalar(tape, scale(tape, dot(tape, g_hat, g), -1.0), 1.0);
  const Tensor l2_term = norm2(tape, sub(tape, g_hat, g));
  return add(tape, scale(tape, cos_term, w.lambda1), scale(tape, l2_term, w.lambda2));
}

Tensor pog_loss(Tape* tape, const Tensor& p_hat, const Tensor& p, double beta,
                SmoothL1Mode mode) {
  if (beta <= 0.0) throw ValueError("pog_loss: beta must be positive");
  if (p_hat.shape() != p.shape()) throw ShapeError("pog_loss: shape mismatch");
  const auto& hv = p_hat.values();
  const auto& gv = p.values();
  const std::size_t n = hv.size();

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = hv[i] - gv[i];

  double value = 0.0;
  std::vector<double> dgrad(n, 0.0);  // dL/dd
  if (mode == SmoothL1Mode::Paper) {
    const double nrm = vec_norm(d);
    if (nrm < beta) {
      for (std::size_t i = 0; i < n; ++i) {
        value += d[i] * d[i];
        dgrad[i] = d[i] / beta;
      }
      value /= 2.0 * beta;
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        value += std::fabs(d[i]);
        dgrad[i] = d[i] > 0.0 ? 1.0 : (d[i] < 0.0 ? -1.0 : 0.0);
      }
      value -= beta / 2.0;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (std::fabs(d[i]) < beta) {
        value += d[i] * d[i] / (2.0 * beta);
        dgrad[i] = d[i] / beta;
      } else {
        value += std::fabs(d[i]) - beta / 2.0;
        dgrad[i] = d[i] > 0.0 ? 1.0 : -1.0;
      }
    }
  }

  const bool rg = tape && p_hat.requires_grad();
  Tensor out = Tensor::zeros({1}, rg);
  out.values()[0] = value;
  if (rg) {
    auto hd = p_hat.data();
    auto od = out.data();
    tape->record("pog_loss", [hd, od, dgrad = std::move(dgrad)] {
      const double g = od->grad[0];
      for (std::size_t i = 0; i < hd->grad.size(); ++i) hd->grad[i] += g * dgrad[i];
    });
  }
  return out;
}

}  // namespace gazekit
