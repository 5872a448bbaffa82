#pragma once

#include <array>

#include "gazekit/feature_streams.hpp"
#include "gazekit/params.hpp"
#include "gazekit/tensor.hpp"

namespace gazekit {

enum class ResidualAxes { Both, Vertical };
enum class AttentionScaling { None, InvSqrtD };

struct FusionConfig {
  int dim = 256;  // embedding width, mirrors the encoder projection_dim
  ResidualAxes residual_axes = ResidualAxes::Both;
  AttentionScaling attention_scaling = AttentionScaling::None;
  double lambda_init = 0.1;
};

// Modality embeddings and the fused gaze-intent query.
struct GazeIntent {
  Tensor z_face;
  Tensor z_eye;
  Tensor z_iris;
  Tensor z_cat;   // ordered [z_face ; z_eye ; z_iris]
  Tensor z_gaze;  // attention query
};

// Attention-based point of gaze with residual correction, plus the unit
// direction vector when the direction head runs.
struct PoGPrediction {
  Tensor alpha;    // 49 attention weights on the simplex
  Tensor p_hat;    // expectation over grid centers, inside the center hull
  Tensor delta_p;  // bounded residual
  Tensor p_final;  // clip01(p_hat + delta_p)
  Tensor g_hat;    // unit 3-vector; undefined unless requested
};

// Registers fusion blocks ("fusion.*") and head parameters ("head.*").
void register_fusion_params(ParamSet& ps, const FusionConfig& cfg, Rng& rng);

Tensor encode_face_embedding(Tape* tape, const std::array<Tensor, 4>& f, const ParamSet& ps,
                             const FusionConfig& cfg);
Tensor encode_eye_embedding(Tape* tape, const Tensor& e_left, const Tensor& e_right,
                            const ParamSet& ps, const FusionConfig& cfg);
// gate multiplies the iris embedding; gate 0 suppresses it entirely.
Tensor encode_iris(Tape* tape, const std::array<double, 4>& ic, double gate, const ParamSet& ps,
                   const FusionConfig& cfg);
GazeIntent fuse_intent(Tape* tape, const Tensor& z_face, const Tensor& z_eye,
                       const Tensor& z_iris, const ParamSet& ps, const FusionConfig& cfg);

Tensor predict_direction(Tape* tape, const Tensor& z_gaze, const ParamSet& ps);

// Dot-product attention of the gaze query over the 49 augmented scene tokens.
Tensor attend_scene(Tape* tape, const Tensor& z_gaze, const SceneTokens& tokens,
                    const ParamSet& ps, const FusionConfig& cfg);

Tensor pog_expectation(Tape* tape, const Tensor& alpha, const Tensor& centers);

Tensor residual_correction(Tape* tape, const Tensor& z_gaze, const ParamSet& ps,
                           const FusionConfig& cfg);

Tensor finalize_pog(Tape* tape, const Tensor& p_hat, const Tensor& delta_p);

}  // namespace gazekit
