#include "gazekit/feature_streams.hpp"

#include <cmath>

namespace gazekit {

Tensor pad_to_square(const Tensor& img, int fill, int target) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw ShapeError("pad_to_square: expects a 3xHxW image, got " + shape_str(img.shape()));
  if (target < 1) throw ValueError("pad_to_square: target must be positive");
  const int h = img.dim(1), w = img.dim(2);

  int nh = target, nw = target;
  if (h >= w)
    nw = std::max(1, int(std::lround(double(w) * target / h)));
  else
    nh = std::max(1, int(std::lround(double(h) * target / w)));

  const Tensor content = resize_bilinear(img, nh, nw);
  Tensor out = Tensor::full({3, target, target}, fill / 255.0);
  const int y0 = (target - nh) / 2;
  const int x0 = (target - nw) / 2;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < nh; ++y)
      for (int x = 0; x < nw; ++x)
        out.values()[(std::size_t(c) * target + (y0 + y)) * target + (x0 + x)] = content(c, y, x);
  return out;
}

GaussianWeightMap gaussian_weight_map(std::array<double, 2> center, int h, int w, double sigma) {
  if (sigma <= 0.0) throw ValueError("gaussian_weight_map: sigma must be positive");
  if (h < 1 || w < 1) throw ValueError("gaussian_weight_map: empty grid");
  GaussianWeightMap g;
  g.sigma = sigma;
  g.center = center;
  g.weights = Tensor::zeros({h, w});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  // Shift by the smallest squared distance so the normalization never
  // underflows to 0/0 at small sigma; the common factor cancels.
  double d2_min = std::numeric_limits<double>::max();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - center[0];
      const double dy = y - center[1];
      d2_min = std::min(d2_min, dx * dx + dy * dy);
    }
  double total = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - center[0];
      const double dy = y - center[1];
      const double v = std::exp(-(dx * dx + dy * dy - d2_min) * inv);
      g.weights.values()[std::size_t(y) * w + x] = v;
      total += v;
    }
  for (auto& v : g.weights.values()) v /= total;
  return g;
}

std::array<double, 2> project_iris_to_map(std::array<double, 2> iris_center_norm, int h, int w) {
  for (double v : iris_center_norm)
    if (v < 0.0 || v > 1.0)
      throw ValueError("project_iris_to_map: normalized coordinates must lie in [0,1]");
  if (h < 1 || w < 1) throw ValueError("project_iris_to_map: empty map");
  return {iris_center_norm[0] * (w - 1), iris_center_norm[1] * (h - 1)};
}

EyeObservation infer_conjugate_iris(const EyeObservation& detected) {
  if (!detected.valid)
    throw ValueError("infer_conjugate_iris: source observation is not valid");
  if (detected.inferred)
    throw ValueError("infer_conjugate_iris: refusing to infer from an inferred observation");
  EyeObservation other;
  other.side = detected.side == EyeSide::Left ? EyeSide::Right : EyeSide::Left;
  other.iris_center_norm = detected.iris_center_norm;
  other.valid = true;
  other.inferred = true;
  return other;
}

IrisGate gate_iris_validity(const EyeObservation& left, const EyeObservation& right) {
  IrisGate out;
  out.left = left;
  out.right = right;

  const bool crop_missing = left.crop_missing || right.crop_missing;
  if (!crop_missing && left.valid && right.valid) {
    out.gate = 1.0;
  } else if (!crop_missing && (left.valid || right.valid)) {
    const EyeObservation& src = left.valid ? left : right;
    EyeObservation inferred = infer_conjugate_iris(src);
    if (left.valid) {
      inferred.eye_image = right.eye_image;
      out.right = inferred;
    } else {
      inferred.eye_image = left.eye_image;
      out.left = inferred;
    }
    out.gate = 1.0;
  } else {
    // Total occlusion: neutralize the iris coordinates and suppress z_iris.
    out.gate = 0.0;
    out.left.iris_center_norm = {0.5, 0.5};
    out.right.iris_center_norm = {0.5, 0.5};
    out.left.valid = true;
    out.right.valid = true;
  }
  out.ic = {out.left.iris_center_norm[0], out.left.iris_center_norm[1],
            out.right.iris_center_norm[0], out.right.iris_center_norm[1]};
  return out;
}

Tensor iris_weighted_eye_embedding(Tape* tape, const EyeObservation& obs,
                                   const EncoderConfig& cfg, const ParamSet& ps,
                                   const std::string& prefix, const NormStats& stats,
                                   double sigma, int pad_fill) {
  if (!obs.valid)
    throw ValueError("iris_weighted_eye_embedding: observation invalid and not gated");
  if (cfg.input_h != cfg.input_w)
    throw ValueError("iris_weighted_eye_embedding: eye encoder input must be square");
  const Tensor padded = pad_to_square(obs.eye_image, pad_fill, cfg.input_h);
  const Tensor normalized = normalize_channels(padded, stats);
  const Tensor fmap = encode_spatial(tape, normalized, cfg, ps, prefix);
  const auto center = project_iris_to_map(obs.iris_center_norm, fmap.dim(1), fmap.dim(2));
  const GaussianWeightMap g = gaussian_weight_map(center, fmap.dim(1), fmap.dim(2), sigma);
  return global_avg_pool(tape, mul_spatial(tape, fmap, g.weights));
}

namespace {

// [P,H,W] -> [H*W, P] row-major token matrix, gradient is the inverse
// scatter.
Tensor map_to_tokens_op(Tape* tape, const Tensor& map) {
  const int p = map.dim(0), h = map.dim(1), w = map.dim(2);
  const bool rg = tape && map.requires_grad();
  Tensor out = Tensor::zeros({h * w, p}, rg);
  const std::size_t plane = std::size_t(h) * w;
  for (int c = 0; c < p; ++c)
    for (std::size_t k = 0; k < plane; ++k)
      out.values()[k * std::size_t(p) + std::size_t(c)] = map.values()[std::size_t(c) * plane + k];
  if (rg) {
    auto md = map.data();
    auto od = out.data();
    tape->record("map_to_tokens", [md, od, p, plane] {
      for (int c = 0; c < p; ++c)
        for (std::size_t k = 0; k < plane; ++k)
          md->grad[std::size_t(c) * plane + k] += od->grad[k * std::size_t(p) + std::size_t(c)];
    });
  }
  return out;
}

// Appends the constant x-coordinate column to the token matrix.
Tensor append_x_column(Tape* tape, const Tensor& tokens, const Tensor& centers) {
  const int n = tokens.dim(0), p = tokens.dim(1);
  const bool rg = tape && tokens.requires_grad();
  Tensor out = Tensor::zeros({n, p + 1}, rg);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < p; ++c)
      out.values()[std::size_t(i) * (p + 1) + std::size_t(c)] = tokens(i, c);
    out.values()[std::size_t(i) * (p + 1) + std::size_t(p)] = centers(i, 0);
  }
  if (rg) {
    auto td = tokens.data();
    auto od = out.data();
    tape->record("append_x_column", [td, od, n, p] {
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < p; ++c)
          td->grad[std::size_t(i) * p + std::size_t(c)] +=
              od->grad[std::size_t(i) * (p + 1) + std::size_t(c)];
    });
  }
  return out;
}

}  // namespace

SceneTokens scene_tokens(Tape* tape, const Tensor& map) {
  if (map.rank() != 3 || map.dim(1) != SceneTokens::kGrid || map.dim(2) != SceneTokens::kGrid)
    throw ShapeError("scene_tokens: expects a Px7x7 map, got " + shape_str(map.shape()));
  SceneTokens out;
  out.tokens = map_to_tokens_op(tape, map);
  out.centers = Tensor::zeros({SceneTokens::kCount, 2});
  for (int r = 0; r < SceneTokens::kGrid; ++r)
    for (int c = 0; c < SceneTokens::kGrid; ++c) {
      const std::size_t k = std::size_t(r) * SceneTokens::kGrid + std::size_t(c);
      out.centers.values()[k * 2 + 0] = (c + 0.5) / SceneTokens::kGrid;
      out.centers.values()[k * 2 + 1] = (r + 0.5) / SceneTokens::kGrid;
    }
  out.augmented = append_x_column(tape, out.tokens, out.centers);
  return out;
}

Tensor tokens_to_map(const Tensor& tokens, int h, int w) {
  if (tokens.rank() != 2 || tokens.dim(0) != h * w)
    throw ShapeError("tokens_to_map: token count does not match grid");
  const int p = tokens.dim(1);
  Tensor map = Tensor::zeros({p, h, w});
  const std::size_t plane = std::size_t(h) * w;
  for (int c = 0; c < p; ++c)
    for (std::size_t k = 0; k < plane; ++k)
      map.values()[std::size_t(c) * plane + k] = tokens.values()[k * std::size_t(p) + std::size_t(c)];
  return map;
}

}  // namespace gazekit
