#pragma once

#include "gazekit/tensor.hpp"

namespace gazekit {

struct LossWeights {
  double lambda1 = 0.7;  // cosine term
  double lambda2 = 0.3;  // Euclidean term
  double beta = 0.02;    // smooth-L1 transition
};

enum class SmoothL1Mode {
  // Mixed-norm form: Euclidean-norm predicate and quadratic branch, 1-norm
  // linear branch. Discontinuous at the boundary for non-axis-aligned
  // differences; kept selectable because downstream numbers depend on it.
  Paper,
  // Conventional per-coordinate Huber, continuous everywhere.
  PerCoordinate,
};

// lambda1 * (1 - g_hat . g) + lambda2 * ||g_hat - g||_2 over unit vectors.
Tensor direction_loss(Tape* tape, const Tensor& g_hat, const Tensor& g, const LossWeights& w);

// Smooth-L1 over the prediction difference; p is constant ground truth.
Tensor pog_loss(Tape* tape, const Tensor& p_hat, const Tensor& p, double beta,
                SmoothL1Mode mode = SmoothL1Mode::Paper);

}  // namespace gazekit
