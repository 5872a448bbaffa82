#include "gazekit/model.hpp"

#include <algorithm>
#include <cmath>

namespace gazekit {

ModelConfig ModelConfig::full_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::miniature() {
  ModelConfig cfg;
  cfg.face_enc = EncoderConfig::miniature();
  cfg.eye_enc = EncoderConfig::miniature();
  cfg.scene_enc = EncoderConfig::miniature_scene();
  cfg.fusion.dim = cfg.face_enc.projection_dim;
  return cfg;
}

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.face_enc.projection_dim != cfg.fusion.dim ||
      cfg.eye_enc.projection_dim != cfg.fusion.dim ||
      cfg.scene_enc.projection_dim != cfg.fusion.dim)
    throw ValueError("model config: projection dims must all equal fusion.dim");
  const auto scene4 = stage_shapes(cfg.scene_enc)[3];
  if (scene4.first != SceneTokens::kGrid || scene4.second != SceneTokens::kGrid)
    throw ValueError("model config: scene encoder stage-4 map must be 7x7, got " +
                     std::to_string(scene4.first) + "x" + std::to_string(scene4.second));
  if (cfg.eye_enc.input_h != cfg.eye_enc.input_w)
    throw ValueError("model config: eye encoder input must be square");
  if (cfg.gaussian_sigma <= 0.0) throw ValueError("model config: sigma must be positive");
}

namespace {

Tensor crop01(const Tensor& img01, const EyeBox& box) {
  const int h = img01.dim(1), w = img01.dim(2);
  const int x0 = std::clamp(int(std::floor(box.x)), 0, w - 1);
  const int y0 = std::clamp(int(std::floor(box.y)), 0, h - 1);
  const int x1 = std::clamp(int(std::ceil(box.x + box.w)), x0 + 1, w);
  const int y1 = std::clamp(int(std::ceil(box.y + box.h)), y0 + 1, h);
  Tensor out = Tensor::zeros({3, y1 - y0, x1 - x0});
  for (int c = 0; c < 3; ++c)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        out.values()[(std::size_t(c) * (y1 - y0) + (y - y0)) * (x1 - x0) + (x - x0)] =
            img01(c, y, x);
  return out;
}

EyeObservation build_eye(const Tensor& face01, const std::optional<EyeBox>& box,
                         const std::optional<std::array<double, 2>>& iris_px, EyeSide side,
                         const ModelConfig& cfg) {
  EyeObservation obs;
  obs.side = side;
  if (!box) {
    // No eye detection at all: neutral grey stand-in, gate forced to zero.
    obs.crop_missing = true;
    obs.eye_image = Tensor::full({3, cfg.eye_enc.input_h, cfg.eye_enc.input_w},
                                 cfg.pad_fill / 255.0);
    return obs;
  }
  if (box->x + box->w > double(face01.dim(2)) + 0.5 ||
      box->y + box->h > double(face01.dim(1)) + 0.5)
    throw ValueError("eye box exceeds face image bounds");
  obs.eye_image = crop01(face01, *box);
  if (iris_px) {
    obs.valid = true;
    obs.iris_center_norm = {std::clamp(((*iris_px)[0] - box->x) / box->w, 0.0, 1.0),
                            std::clamp(((*iris_px)[1] - box->y) / box->h, 0.0, 1.0)};
  }
  return obs;
}

}  // namespace

LoadedSample prepare_from_images(const SampleRecord& rec, const Image& face, const Image& scene,
                                 const ModelConfig& cfg) {
  LoadedSample s;
  s.driver_id = rec.driver_id;
  const Tensor face01 = image_to_tensor01(face);
  s.face = normalize_channels(
      resize_bilinear(face01, cfg.face_enc.input_h, cfg.face_enc.input_w), cfg.norm);
  s.scene = normalize_channels(
      resize_bilinear(image_to_tensor01(scene), cfg.scene_enc.input_h, cfg.scene_enc.input_w),
      cfg.norm);
  s.left = build_eye(face01, rec.eye_box_left, rec.iris_left_px, EyeSide::Left, cfg);
  s.right = build_eye(face01, rec.eye_box_right, rec.iris_right_px, EyeSide::Right, cfg);
  s.gaze_norm = rec.gaze_norm;
  s.gaze_vec = rec.gaze_vec;
  return s;
}

LoadedSample prepare_sample(const SampleRecord& rec, const std::string& base_dir,
                            const ModelConfig& cfg) {
  const std::string base = base_dir.empty() ? std::string() : base_dir + "/";
  const Image face = read_ppm(base + rec.face_path);
  const Image scene = read_ppm(base + rec.scene_path);
  return prepare_from_images(rec, face, scene, cfg);
}

LoadedSample prepare_synthetic(const SyntheticSample& s, const ModelConfig& cfg) {
  return prepare_from_images(s.record, s.face, s.scene, cfg);
}

GazeModel GazeModel::init(ModelConfig cfg, std::uint64_t seed) {
  validate_model_config(cfg);
  GazeModel m;
  m.cfg = cfg;
  Rng root(seed);
  Rng face_rng = root.fork("init.face");
  Rng eye_rng = root.fork("init.eye");
  Rng scene_rng = root.fork("init.scene");
  Rng fusion_rng = root.fork("init.fusion");
  register_encoder_params(m.params, "face", cfg.face_enc, face_rng, /*all_projections=*/true);
  register_encoder_params(m.params, "eye", cfg.eye_enc, eye_rng, /*all_projections=*/false);
  register_encoder_params(m.params, "scene", cfg.scene_enc, scene_rng,
                          /*all_projections=*/false);
  register_fusion_params(m.params, cfg.fusion, fusion_rng);
  if (cfg.scene_blind) {
    Tensor& wk = m.params.get("head.attn.wk");
    std::fill(wk.values().begin(), wk.values().end(), 0.0);
  }
  return m;
}

ForwardResult GazeModel::forward(Tape* tape, const LoadedSample& s) const {
  ForwardResult out;

  const StagePyramid face_pyr = encode_hierarchical(tape, s.face, cfg.face_enc, params, "face");
  const std::array<Tensor, 4> face_vecs = pyramid_gap(tape, face_pyr);
  const Tensor z_face = encode_face_embedding(tape, face_vecs, params, cfg.fusion);

  const IrisGate gate = gate_iris_validity(s.left, s.right);
  out.gate = gate.gate;
  const Tensor e_left = iris_weighted_eye_embedding(tape, gate.left, cfg.eye_enc, params, "eye",
                                                    cfg.norm, cfg.gaussian_sigma, cfg.pad_fill);
  const Tensor e_right = iris_weighted_eye_embedding(tape, gate.right, cfg.eye_enc, params, "eye",
                                                     cfg.norm, cfg.gaussian_sigma, cfg.pad_fill);
  const Tensor z_eye = encode_eye_embedding(tape, e_left, e_right, params, cfg.fusion);
  const Tensor z_iris = encode_iris(tape, gate.ic, gate.gate, params, cfg.fusion);

  out.intent = fuse_intent(tape, z_face, z_eye, z_iris, params, cfg.fusion);

  if (cfg.heads != Heads::Pog)
    out.pog.g_hat = predict_direction(tape, out.intent.z_gaze, params);

  if (cfg.heads != Heads::Direction) {
    const Tensor scene_map = encode_spatial(tape, s.scene, cfg.scene_enc, params, "scene");
    const SceneTokens tokens = scene_tokens(tape, scene_map);
    out.pog.alpha = attend_scene(tape, out.intent.z_gaze, tokens, params, cfg.fusion);
    out.pog.p_hat = pog_expectation(tape, out.pog.alpha, tokens.centers);
    out.pog.delta_p = residual_correction(tape, out.intent.z_gaze, params, cfg.fusion);
    out.pog.p_final = finalize_pog(tape, out.pog.p_hat, out.pog.delta_p);
  }
  return out;
}

SampleLoss GazeModel::sample_loss(Tape* tape, const ForwardResult& fwd, const LoadedSample& s,
                                  const LossWeights& w) const {
  SampleLoss out;
  Tensor total;
  if (cfg.heads != Heads::Pog) {
    if (!s.gaze_vec)
      throw ValueError("sample_loss: direction head active but sample has no gaze_vec");
    const Tensor gt = Tensor::of({3}, {(*s.gaze_vec)[0], (*s.gaze_vec)[1], (*s.gaze_vec)[2]});
    const Tensor dir = direction_loss(tape, fwd.pog.g_hat, gt, w);
    out.dir_value = dir.item();
    total = dir;
  }
  if (cfg.heads != Heads::Direction) {
    const Tensor gt = Tensor::of({2}, {s.gaze_norm[0], s.gaze_norm[1]});
    const Tensor pl = pog_loss(tape, fwd.pog.p_final, gt, w.beta, cfg.smooth_l1);
    out.pog_value = pl.item();
    total = total.defined() ? add(tape, total, pl) : pl;
  }
  out.total = total;
  return out;
}

}  // namespace gazekit
