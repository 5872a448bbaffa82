#pragma once

#include <array>
#include <string>

#include "gazekit/params.hpp"
#include "gazekit/tensor.hpp"

namespace gazekit {

struct StemConfig {
  int kernel = 7;
  int stride = 4;
  int out_channels = 64;
};

struct StageConfig {
  int blocks = 2;
  int out_channels = 64;
  int stride = 1;  // applied by the first block of the stage
};

// Stem + four residual stages; per-stage 1x1 projections into a shared
// embedding space. LayerNorm over channels stands in for batch norm so that
// single-sample training stays deterministic.
struct EncoderConfig {
  StemConfig stem;
  std::array<StageConfig, 4> stages{
      StageConfig{2, 64, 1},
      StageConfig{2, 128, 2},
      StageConfig{2, 256, 2},
      StageConfig{2, 512, 2},
  };
  int projection_dim = 256;
  int input_h = 224;
  int input_w = 224;

  static EncoderConfig resnet18_like();
  // Desk-scale config for gradient checks: stem 8ch, stages 8/16/32/64,
  // 32x32 input, 2x2 final map.
  static EncoderConfig miniature();
  // Scene variant whose stage-4 map is 7x7 (28x28 input).
  static EncoderConfig miniature_scene();
};

// Independent shape propagation for the stride arithmetic; tests compare the
// actual tensor extents against this.
int conv_out_extent(int in, int kernel, int stride, int pad);
std::array<std::pair<int, int>, 4> stage_shapes(const EncoderConfig& cfg);

struct StagePyramid {
  std::array<Tensor, 4> maps;       // C_l x H_l x W_l
  std::array<Tensor, 4> projected;  // P x H_l x W_l
};

// Registers stem/stage/projection parameters under `prefix`. Face encoders
// project every stage; eye and scene streams only need the stage-4 projection.
void register_encoder_params(ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg,
                             Rng& rng, bool all_projections);

StagePyramid encode_hierarchical(Tape* tape, const Tensor& image, const EncoderConfig& cfg,
                                 const ParamSet& ps, const std::string& prefix);

std::array<Tensor, 4> pyramid_gap(Tape* tape, const StagePyramid& p);

// Deep stage-4 map projected into the embedding space, spatial structure kept.
Tensor encode_spatial(Tape* tape, const Tensor& image, const EncoderConfig& cfg,
                      const ParamSet& ps, const std::string& prefix);

}  // namespace gazekit
