#include "gazekit/encoders.hpp"

namespace gazekit {

EncoderConfig EncoderConfig::resnet18_like() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::miniature() {
  EncoderConfig cfg;
  cfg.stem = {3, 2, 8};
  cfg.stages = {StageConfig{1, 8, 1}, StageConfig{1, 16, 2}, StageConfig{1, 32, 2},
                StageConfig{1, 64, 2}};
  cfg.projection_dim = 32;
  cfg.input_h = cfg.input_w = 32;
  return cfg;
}

EncoderConfig EncoderConfig::miniature_scene() {
  EncoderConfig cfg;
  cfg.stem = {3, 1, 8};
  cfg.stages = {StageConfig{1, 8, 1}, StageConfig{1, 16, 2}, StageConfig{1, 32, 2},
                StageConfig{1, 64, 1}};
  cfg.projection_dim = 32;
  cfg.input_h = cfg.input_w = 28;
  return cfg;
}

int conv_out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

std::array<std::pair<int, int>, 4> stage_shapes(const EncoderConfig& cfg) {
  int h = conv_out_extent(cfg.input_h, cfg.stem.kernel, cfg.stem.stride, cfg.stem.kernel / 2);
  int w = conv_out_extent(cfg.input_w, cfg.stem.kernel, cfg.stem.stride, cfg.stem.kernel / 2);
  std::array<std::pair<int, int>, 4> out{};
  for (int l = 0; l < 4; ++l) {
    const int s = cfg.stages[std::size_t(l)].stride;
    h = conv_out_extent(h, 3, s, 1);
    w = conv_out_extent(w, 3, s, 1);
    out[std::size_t(l)] = {h, w};
  }
  return out;
}

namespace {

std::string stage_prefix(const std::string& prefix, int l, int b) {
  return prefix + ".s" + std::to_string(l + 1) + ".b" + std::to_string(b + 1);
}

void register_block(ParamSet& ps, const std::string& bp, int in_ch, int out_ch, bool downsample,
                    Rng& rng) {
  ps.add(bp + ".conv1.w", kaiming_conv({out_ch, in_ch, 3, 3}, rng));
  ps.add(bp + ".conv1.b", Tensor::zeros({out_ch}));
  ps.add(bp + ".ln1.g", Tensor::full({out_ch}, 1.0));
  ps.add(bp + ".ln1.b", Tensor::zeros({out_ch}));
  ps.add(bp + ".conv2.w", kaiming_conv({out_ch, out_ch, 3, 3}, rng));
  ps.add(bp + ".conv2.b", Tensor::zeros({out_ch}));
  ps.add(bp + ".ln2.g", Tensor::full({out_ch}, 1.0));
  ps.add(bp + ".ln2.b", Tensor::zeros({out_ch}));
  if (downsample) {
    ps.add(bp + ".proj.w", kaiming_conv({out_ch, in_ch, 1, 1}, rng));
    ps.add(bp + ".proj.b", Tensor::zeros({out_ch}));
    ps.add(bp + ".lnp.g", Tensor::full({out_ch}, 1.0));
    ps.add(bp + ".lnp.b", Tensor::zeros({out_ch}));
  }
}

// conv -> bias -> channel LN -> (optional relu)
Tensor conv_ln(Tape* t, const Tensor& x, const ParamSet& ps, const std::string& conv,
               const std::string& ln, int stride, int pad, bool activate) {
  Tensor y = conv2d(t, x, ps.get(conv + ".w"), stride, pad);
  y = add_channel_bias(t, y, ps.get(conv + ".b"));
  y = layer_norm_channels(t, y, ps.get(ln + ".g"), ps.get(ln + ".b"));
  return activate ? relu(t, y) : y;
}

Tensor block_forward(Tape* t, const Tensor& x, const ParamSet& ps, const std::string& bp,
                     int stride, bool downsample) {
  Tensor y = conv_ln(t, x, ps, bp + ".conv1", bp + ".ln1", stride, 1, true);
  y = conv_ln(t, y, ps, bp + ".conv2", bp + ".ln2", 1, 1, false);
  Tensor skip = downsample ? conv_ln(t, x, ps, bp + ".proj", bp + ".lnp", stride, 0, false) : x;
  return relu(t, add(t, y, skip));
}

Tensor run_stages(Tape* tape, const Tensor& image, const EncoderConfig& cfg, const ParamSet& ps,
                  const std::string& prefix, std::array<Tensor, 4>* stage_maps) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != cfg.input_h ||
      image.dim(2) != cfg.input_w)
    throw ShapeError("encoder: expected 3x" + std::to_string(cfg.input_h) + "x" +
                     std::to_string(cfg.input_w) + " input, got " + shape_str(image.shape()));

  Tensor x = conv2d(tape, image, ps.get(prefix + ".stem.conv.w"), cfg.stem.stride,
                    cfg.stem.kernel / 2);
  x = add_channel_bias(tape, x, ps.get(prefix + ".stem.conv.b"));
  x = layer_norm_channels(tape, x, ps.get(prefix + ".stem.ln.g"), ps.get(prefix + ".stem.ln.b"));
  x = relu(tape, x);

  int in_ch = cfg.stem.out_channels;
  for (int l = 0; l < 4; ++l) {
    const StageConfig& sc = cfg.stages[std::size_t(l)];
    for (int b = 0; b < sc.blocks; ++b) {
      const int stride = b == 0 ? sc.stride : 1;
      const bool downsample = b == 0 && (stride != 1 || in_ch != sc.out_channels);
      x = block_forward(tape, x, ps, stage_prefix(prefix, l, b), stride, downsample);
      in_ch = sc.out_channels;
    }
    if (stage_maps) (*stage_maps)[std::size_t(l)] = x;
  }
  return x;
}

Tensor project_stage(Tape* tape, const Tensor& map, const ParamSet& ps, const std::string& prefix,
                     int l) {
  const std::string base = prefix + ".proj" + std::to_string(l + 1);
  Tensor p = conv2d(tape, map, ps.get(base + ".w"), 1, 0);
  return add_channel_bias(tape, p, ps.get(base + ".b"));
}

}  // namespace

void register_encoder_params(ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg,
                             Rng& rng, bool all_projections) {
  ps.add(prefix + ".stem.conv.w",
         kaiming_conv({cfg.stem.out_channels, 3, cfg.stem.kernel, cfg.stem.kernel}, rng));
  ps.add(prefix + ".stem.conv.b", Tensor::zeros({cfg.stem.out_channels}));
  ps.add(prefix + ".stem.ln.g", Tensor::full({cfg.stem.out_channels}, 1.0));
  ps.add(prefix + ".stem.ln.b", Tensor::zeros({cfg.stem.out_channels}));

  int in_ch = cfg.stem.out_channels;
  for (int l = 0; l < 4; ++l) {
    const StageConfig& sc = cfg.stages[std::size_t(l)];
    for (int b = 0; b < sc.blocks; ++b) {
      const int stride = b == 0 ? sc.stride : 1;
      const bool downsample = b == 0 && (stride != 1 || in_ch != sc.out_channels);
      register_block(ps, stage_prefix(prefix, l, b), in_ch, sc.out_channels, downsample, rng);
      in_ch = sc.out_channels;
    }
  }

  for (int l = 0; l < 4; ++l) {
    if (!all_projections && l != 3) continue;
    const std::string base = prefix + ".proj" + std::to_string(l + 1);
    ps.add(base + ".w",
           kaiming_conv({cfg.projection_dim, cfg.stages[std::size_t(l)].out_channels, 1, 1}, rng));
    ps.add(base + ".b", Tensor::zeros({cfg.projection_dim}));
  }
}

StagePyramid encode_hierarchical(Tape* tape, const Tensor& image, const EncoderConfig& cfg,
                                 const ParamSet& ps, const std::string& prefix) {
  StagePyramid out;
  run_stages(tape, image, cfg, ps, prefix, &out.maps);
  for (int l = 0; l < 4; ++l)
    out.projected[std::size_t(l)] = project_stage(tape, out.maps[std::size_t(l)], ps, prefix, l);
  return out;
}

std::array<Tensor, 4> pyramid_gap(Tape* tape, const StagePyramid& p) {
  std::array<Tensor, 4> out;
  for (int l = 0; l < 4; ++l) {
    if (!p.projected[std::size_t(l)].defined())
      throw ValueError("pyramid_gap: projected maps missing");
    out[std::size_t(l)] = global_avg_pool(tape, p.projected[std::size_t(l)]);
  }
  return out;
}

Tensor encode_spatial(Tape* tape, const Tensor& image, const EncoderConfig& cfg,
                      const ParamSet& ps, const std::string& prefix) {
  const Tensor deep = run_stages(tape, image, cfg, ps, prefix, nullptr);
  return project_stage(tape, deep, ps, prefix, 3);
}

}  // namespace gazekit
