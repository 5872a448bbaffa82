#pragma once

#include <optional>
#include <string>

#include "gazekit/dataset.hpp"
#include "gazekit/encoders.hpp"
#include "gazekit/fusion.hpp"
#include "gazekit/losses.hpp"
#include "gazekit/synth.hpp"

namespace gazekit {

enum class Heads { Direction, Pog, Both };

struct ModelConfig {
  EncoderConfig face_enc = EncoderConfig::resnet18_like();
  EncoderConfig eye_enc = EncoderConfig::resnet18_like();
  EncoderConfig scene_enc = EncoderConfig::resnet18_like();
  FusionConfig fusion;
  double gaussian_sigma = 1.2;
  int pad_fill = 114;
  NormStats norm;
  Heads heads = Heads::Both;
  SmoothL1Mode smooth_l1 = SmoothL1Mode::Paper;
  // Ablation switch: W_k pinned at zero (and frozen by the optimizer), which
  // decouples the PoG from scene content.
  bool scene_blind = false;

  static ModelConfig full_scale();
  static ModelConfig miniature();
};

// Projection dims must agree across streams and the scene stage-4 map must be
// the 7x7 token grid.
void validate_model_config(const ModelConfig& cfg);

// A sample with its images decoded and resized for the encoders.
struct LoadedSample {
  std::string driver_id;
  Tensor face;   // normalized face encoder input
  Tensor scene;  // normalized scene encoder input
  EyeObservation left;
  EyeObservation right;
  std::array<double, 2> gaze_norm{0.5, 0.5};
  std::optional<std::array<double, 3>> gaze_vec;
};

LoadedSample prepare_sample(const SampleRecord& rec, const std::string& base_dir,
                            const ModelConfig& cfg);
LoadedSample prepare_synthetic(const SyntheticSample& s, const ModelConfig& cfg);
// Shared path: images already in memory.
LoadedSample prepare_from_images(const SampleRecord& rec, const Image& face, const Image& scene,
                                 const ModelConfig& cfg);

struct ForwardResult {
  GazeIntent intent;
  PoGPrediction pog;  // alpha/p_hat/delta_p/p_final; g_hat per heads
  double gate = 0.0;
};

struct SampleLoss {
  Tensor total;           // scalar on the tape
  double dir_value = 0.0;
  double pog_value = 0.0;
};

class GazeModel {
 public:
  GazeModel() = default;
  static GazeModel init(ModelConfig cfg, std::uint64_t seed);

  ForwardResult forward(Tape* tape, const LoadedSample& s) const;
  SampleLoss sample_loss(Tape* tape, const ForwardResult& fwd, const LoadedSample& s,
                         const LossWeights& w) const;

  ModelConfig cfg;
  ParamSet params;
};

}  // namespace gazekit
