#pragma once

#include <array>
#include <optional>

#include "gazekit/encoders.hpp"
#include "gazekit/image.hpp"
#include "gazekit/tensor.hpp"

namespace gazekit {

enum class EyeSide { Left, Right };

// One eye crop plus its iris observation. iris_center_norm is relative to the
// eye box (not the padded input).
struct EyeObservation {
  Tensor eye_image;  // 3 x h x w, [0,1] intensities, pre-padding
  std::array<double, 2> iris_center_norm{0.5, 0.5};
  bool valid = false;
  EyeSide side = EyeSide::Left;
  bool inferred = false;      // set when the iris came from the conjugate rule
  bool crop_missing = false;  // no eye box at all; forces gate 0
};

struct GaussianWeightMap {
  Tensor weights;  // H x W, strictly positive, sums to 1
  double sigma = 1.2;
  std::array<double, 2> center{0.0, 0.0};  // feature-map coordinates (x, y)
};

// 49 scene tokens with fixed normalized grid centers; token k (0-based) maps
// to cell (row r, col c) via k = 7r + c, center ((c+0.5)/7, (r+0.5)/7).
struct SceneTokens {
  static constexpr int kGrid = 7;
  static constexpr int kCount = kGrid * kGrid;
  Tensor tokens;     // 49 x P
  Tensor centers;    // 49 x 2, constant
  Tensor augmented;  // 49 x (P+1), rows [s_i ; x_i]
};

// Aspect-preserving resize of the longest side to `target`, shorter side
// centered between constant-fill bands (fill is an 8-bit intensity).
Tensor pad_to_square(const Tensor& img, int fill = 114, int target = 224);

// Normalized 2D Gaussian over an H x W grid, centered at map coordinates.
GaussianWeightMap gaussian_weight_map(std::array<double, 2> center, int h, int w, double sigma);

// (c_x, c_y) in [0,1]^2 -> continuous feature-map coordinates, no rounding.
std::array<double, 2> project_iris_to_map(std::array<double, 2> iris_center_norm, int h, int w);

// Conjugate eye movement: the opposite eye inherits the same normalized
// within-box iris offset. Inferring from an inferred observation is rejected.
EyeObservation infer_conjugate_iris(const EyeObservation& detected);

struct IrisGate {
  std::array<double, 4> ic{0.5, 0.5, 0.5, 0.5};  // [cxL, cyL, cxR, cyR]
  double gate = 0.0;
  EyeObservation left;   // effective observations after conjugate inference
  EyeObservation right;
};

// Validity gating: both irises resolvable (directly or via the conjugate
// rule) => gate 1; neither => neutral coordinates and gate 0.
IrisGate gate_iris_validity(const EyeObservation& left, const EyeObservation& right);

// Gaussian-weighted eye embedding: pad, normalize, encode to the projected
// stage-4 map, weight by the iris Gaussian, pool.
Tensor iris_weighted_eye_embedding(Tape* tape, const EyeObservation& obs,
                                   const EncoderConfig& cfg, const ParamSet& ps,
                                   const std::string& prefix, const NormStats& stats,
                                   double sigma, int pad_fill = 114);

// Row-major flattening of a P x 7 x 7 map into grid tokens with centers.
SceneTokens scene_tokens(Tape* tape, const Tensor& map);

// Inverse of the token flattening, for round-trip checks.
Tensor tokens_to_map(const Tensor& tokens, int h, int w);

}  // namespace gazekit
