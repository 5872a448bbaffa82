#include "gazekit/fusion.hpp"

#include <cmath>

namespace gazekit {

namespace {

void register_mlp(ParamSet& ps, const std::string& base, int out_dim, int in_dim, Rng& rng) {
  ps.add(base + ".w", xavier_linear(out_dim, in_dim, rng));
  ps.add(base + ".b", Tensor::zeros({out_dim}));
  ps.add(base + ".ln.g", Tensor::full({out_dim}, 1.0));
  ps.add(base + ".ln.b", Tensor::zeros({out_dim}));
}

// LN(ReLU(W x + b)) with the block's own LN parameters.
Tensor mlp_block(Tape* t, const Tensor& x, const ParamSet& ps, const std::string& base) {
  Tensor y = linear(t, ps.get(base + ".w"), x, ps.get(base + ".b"));
  y = relu(t, y);
  return layer_norm(t, y, ps.get(base + ".ln.g"), ps.get(base + ".ln.b"));
}

}  // namespace

void register_fusion_params(ParamSet& ps, const FusionConfig& cfg, Rng& rng) {
  const int p = cfg.dim;
  register_mlp(ps, "fusion.face", p, 4 * p, rng);
  register_mlp(ps, "fusion.eye", p, 2 * p, rng);
  register_mlp(ps, "fusion.iris", p, 4, rng);
  register_mlp(ps, "fusion.gaze", p, 3 * p, rng);
  ps.add("head.dir.w", xavier_linear(3, p, rng));
  ps.add("head.dir.b", Tensor::zeros({3}));
  ps.add("head.attn.wk", xavier_linear(p, p + 1, rng));
  ps.add("head.res.wp", xavier_linear(2, p, rng));
  ps.add("head.res.lambda", Tensor::of({1}, {cfg.lambda_init}));
}

Tensor encode_face_embedding(Tape* tape, const std::array<Tensor, 4>& f, const ParamSet& ps,
                             const FusionConfig& cfg) {
  for (const Tensor& v : f)
    if (v.rank() != 1 || v.dim(0) != cfg.dim)
      throw ShapeError("encode_face_embedding: expects four " + std::to_string(cfg.dim) +
                       "-d vectors");
  const Tensor cat = concat(tape, f);
  return mlp_block(tape, cat, ps, "fusion.face");
}

Tensor encode_eye_embedding(Tape* tape, const Tensor& e_left, const Tensor& e_right,
                            const ParamSet& ps, const FusionConfig& cfg) {
  if (e_left.rank() != 1 || e_left.dim(0) != cfg.dim || e_right.rank() != 1 ||
      e_right.dim(0) != cfg.dim)
    throw ShapeError("encode_eye_embedding: expects two " + std::to_string(cfg.dim) +
                     "-d vectors");
  Tensor parts[] = {e_left, e_right};
  return mlp_block(tape, concat(tape, parts), ps, "fusion.eye");
}

Tensor encode_iris(Tape* tape, const std::array<double, 4>& ic, double gate, const ParamSet& ps,
                   const FusionConfig& cfg) {
  for (double v : ic)
    if (v < 0.0 || v > 1.0) throw ValueError("encode_iris: coordinates must lie in [0,1]");
  // Hard suppression: with gate 0 the embedding is exactly zero and nothing
  // reaches the tape, so downstream outputs cannot depend on ic.
  if (gate == 0.0) return Tensor::zeros({cfg.dim});
  const Tensor ict = Tensor::of({4}, {ic[0], ic[1], ic[2], ic[3]});
  Tensor z = mlp_block(tape, ict, ps, "fusion.iris");
  return gate == 1.0 ? z : scale(tape, z, gate);
}

GazeIntent fuse_intent(Tape* tape, const Tensor& z_face, const Tensor& z_eye,
                       const Tensor& z_iris, const ParamSet& ps, const FusionConfig& cfg) {
  if (z_face.dim(0) != cfg.dim || z_eye.dim(0) != cfg.dim || z_iris.dim(0) != cfg.dim)
    throw ShapeError("fuse_intent: modality embeddings must all be " + std::to_string(cfg.dim) +
                     "-d");
  GazeIntent out;
  out.z_face = z_face;
  out.z_eye = z_eye;
  out.z_iris = z_iris;
  Tensor parts[] = {z_face, z_eye, z_iris};
  out.z_cat = concat(tape, parts);
  out.z_gaze = mlp_block(tape, out.z_cat, ps, "fusion.gaze");
  return out;
}

Tensor predict_direction(Tape* tape, const Tensor& z_gaze, const ParamSet& ps) {
  const Tensor pre = linear(tape, ps.get("head.dir.w"), z_gaze, ps.get("head.dir.b"));
  return l2_normalize(tape, pre);
}

Tensor attend_scene(Tape* tape, const Tensor& z_gaze, const SceneTokens& tokens,
                    const ParamSet& ps, const FusionConfig& cfg) {
  if (tokens.augmented.rank() != 2 || tokens.augmented.dim(0) != SceneTokens::kCount ||
      tokens.augmented.dim(1) != cfg.dim + 1)
    throw ShapeError("attend_scene: augmented tokens must be 49x" + std::to_string(cfg.dim + 1));
  // logits_i = z^T (W_k s~_i) computed as (W_k^T z) . s~_i.
  const Tensor wq = matvec(tape, ps.get("head.attn.wk"), z_gaze, /*transpose_a=*/true);
  Tensor logits = matvec(tape, tokens.augmented, wq);
  if (cfg.attention_scaling == AttentionScaling::InvSqrtD)
    logits = scale(tape, logits, 1.0 / std::sqrt(double(cfg.dim)));
  return softmax(tape, logits);
}

Tensor pog_expectation(Tape* tape, const Tensor& alpha, const Tensor& centers) {
  if (alpha.rank() != 1 || centers.rank() != 2 || centers.dim(0) != alpha.dim(0) ||
      centers.dim(1) != 2)
    throw ShapeError("pog_expectation: alpha and centers disagree");
  return matvec(tape, centers, alpha, /*transpose_a=*/true);
}

Tensor residual_correction(Tape* tape, const Tensor& z_gaze, const ParamSet& ps,
                           const FusionConfig& cfg) {
  Tensor d = tanh(tape, matvec(tape, ps.get("head.res.wp"), z_gaze));
  d = scale_by(tape, d, ps.get("head.res.lambda"));
  if (cfg.residual_axes == ResidualAxes::Vertical)
    d = mul(tape, d, Tensor::of({2}, {0.0, 1.0}));
  return d;
}

Tensor finalize_pog(Tape* tape, const Tensor& p_hat, const Tensor& delta_p) {
  return clip01(tape, add(tape, p_hat, delta_p));
}

}  // namespace gazekit
