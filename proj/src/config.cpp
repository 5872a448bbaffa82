#include "gazekit/config.hpp"

#include <fstream>

namespace gazekit {

namespace {

using nlohmann::json;

json encoder_to_json(const EncoderConfig& e) {
  json j;
  j["stem"] = {{"kernel", e.stem.kernel}, {"stride", e.stem.stride}, {"channels", e.stem.out_channels}};
  j["stages"] = json::array();
  for (const auto& s : e.stages)
    j["stages"].push_back({{"blocks", s.blocks}, {"channels", s.out_channels}, {"stride", s.stride}});
  j["projection_dim"] = e.projection_dim;
  j["input"] = {e.input_h, e.input_w};
  return j;
}

EncoderConfig encoder_from_json(const json& j, EncoderConfig base) {
  if (j.contains("stem")) {
    base.stem.kernel = j["stem"].value("kernel", base.stem.kernel);
    base.stem.stride = j["stem"].value("stride", base.stem.stride);
    base.stem.out_channels = j["stem"].value("channels", base.stem.out_channels);
  }
  if (j.contains("stages")) {
    const auto& stages = j["stages"];
    if (!stages.is_array() || stages.size() != 4)
      throw ParseError("config: encoder stages must be an array of 4 entries");
    for (std::size_t l = 0; l < 4; ++l) {
      base.stages[l].blocks = stages[l].value("blocks", base.stages[l].blocks);
      base.stages[l].out_channels = stages[l].value("channels", base.stages[l].out_channels);
      base.stages[l].stride = stages[l].value("stride", base.stages[l].stride);
    }
  }
  base.projection_dim = j.value("projection_dim", base.projection_dim);
  if (j.contains("input")) {
    const auto& in = j["input"];
    if (!in.is_array() || in.size() != 2) throw ParseError("config: encoder input must be [h,w]");
    base.input_h = in[0].get<int>();
    base.input_w = in[1].get<int>();
  }
  return base;
}

template <class T>
T enum_from_string(const std::string& s, std::initializer_list<std::pair<const char*, T>> table,
                   const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw ParseError(std::string("config: unknown ") + what + " '" + s + "'");
}

const char* heads_str(Heads h) {
  switch (h) {
    case Heads::Direction: return "direction";
    case Heads::Pog: return "pog";
    case Heads::Both: return "both";
  }
  return "both";
}

}  // namespace

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["lr"] = cfg.lr;
  j["optimizer"] = cfg.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
  j["adam"] = {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}};
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["loss"] = {{"lambda1", cfg.loss.lambda1},
               {"lambda2", cfg.loss.lambda2},
               {"beta", cfg.loss.beta}};
  j["eval"] = {{"image_w", cfg.eval_image_w}, {"image_h", cfg.eval_image_h}};

  json m;
  m["heads"] = heads_str(cfg.model.heads);
  m["smooth_l1_mode"] =
      cfg.model.smooth_l1 == SmoothL1Mode::Paper ? "paper" : "per_coordinate";
  m["residual_axes"] =
      cfg.model.fusion.residual_axes == ResidualAxes::Both ? "both" : "vertical";
  m["attention_scaling"] =
      cfg.model.fusion.attention_scaling == AttentionScaling::None ? "none" : "inv_sqrt_d";
  m["lambda_init"] = cfg.model.fusion.lambda_init;
  m["scene_blind"] = cfg.model.scene_blind;
  m["sigma"] = cfg.model.gaussian_sigma;
  m["pad_fill"] = cfg.model.pad_fill;
  m["norm"] = {{"mean", cfg.model.norm.mean}, {"std", cfg.model.norm.std}};
  m["face_enc"] = encoder_to_json(cfg.model.face_enc);
  m["eye_enc"] = encoder_to_json(cfg.model.eye_enc);
  m["scene_enc"] = encoder_to_json(cfg.model.scene_enc);
  j["model"] = m;

  json sp;
  switch (cfg.split.mode) {
    case SplitChoice::Mode::Counts:
      sp["mode"] = "counts";
      sp["train"] = cfg.split.n_train;
      sp["val"] = cfg.split.n_val;
      sp["test"] = cfg.split.n_test;
      break;
    case SplitChoice::Mode::Ratio:
      sp["mode"] = "ratio";
      sp["train"] = cfg.split.r_train;
      sp["val"] = cfg.split.r_val;
      sp["test"] = cfg.split.r_test;
      break;
    case SplitChoice::Mode::Explicit:
      sp["mode"] = "explicit";
      sp["train"] = cfg.split.explicit_spec.train_drivers;
      sp["val"] = cfg.split.explicit_spec.val_drivers;
      sp["test"] = cfg.split.explicit_spec.test_drivers;
      break;
  }
  j["split"] = sp;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  if (!j.is_object()) throw ParseError("config: expected a JSON object");

  const std::string preset = j.value("model_preset", std::string("full"));
  if (preset == "miniature")
    cfg.model = ModelConfig::miniature();
  else if (preset == "full")
    cfg.model = ModelConfig::full_scale();
  else
    throw ParseError("config: unknown model_preset '" + preset + "'");

  cfg.seed = j.value("seed", cfg.seed);
  cfg.lr = j.value("lr", cfg.lr);
  if (j.contains("optimizer"))
    cfg.optimizer = enum_from_string<OptimizerKind>(
        j["optimizer"].get<std::string>(),
        {{"adam", OptimizerKind::Adam}, {"sgd", OptimizerKind::Sgd}}, "optimizer");
  if (j.contains("adam")) {
    cfg.adam.beta1 = j["adam"].value("beta1", cfg.adam.beta1);
    cfg.adam.beta2 = j["adam"].value("beta2", cfg.adam.beta2);
    cfg.adam.eps = j["adam"].value("eps", cfg.adam.eps);
  }
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  if (j.contains("loss")) {
    cfg.loss.lambda1 = j["loss"].value("lambda1", cfg.loss.lambda1);
    cfg.loss.lambda2 = j["loss"].value("lambda2", cfg.loss.lambda2);
    cfg.loss.beta = j["loss"].value("beta", cfg.loss.beta);
  }
  if (j.contains("eval")) {
    cfg.eval_image_w = j["eval"].value("image_w", cfg.eval_image_w);
    cfg.eval_image_h = j["eval"].value("image_h", cfg.eval_image_h);
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    if (m.contains("heads"))
      cfg.model.heads = enum_from_string<Heads>(
          m["heads"].get<std::string>(),
          {{"direction", Heads::Direction}, {"pog", Heads::Pog}, {"both", Heads::Both}}, "heads");
    if (m.contains("smooth_l1_mode"))
      cfg.model.smooth_l1 = enum_from_string<SmoothL1Mode>(
          m["smooth_l1_mode"].get<std::string>(),
          {{"paper", SmoothL1Mode::Paper}, {"per_coordinate", SmoothL1Mode::PerCoordinate}},
          "smooth_l1_mode");
    if (m.contains("residual_axes"))
      cfg.model.fusion.residual_axes = enum_from_string<ResidualAxes>(
          m["residual_axes"].get<std::string>(),
          {{"both", ResidualAxes::Both}, {"vertical", ResidualAxes::Vertical}}, "residual_axes");
    if (m.contains("attention_scaling"))
      cfg.model.fusion.attention_scaling = enum_from_string<AttentionScaling>(
          m["attention_scaling"].get<std::string>(),
          {{"none", AttentionScaling::None}, {"inv_sqrt_d", AttentionScaling::InvSqrtD}},
          "attention_scaling");
    cfg.model.fusion.lambda_init = m.value("lambda_init", cfg.model.fusion.lambda_init);
    cfg.model.scene_blind = m.value("scene_blind", cfg.model.scene_blind);
    cfg.model.gaussian_sigma = m.value("sigma", cfg.model.gaussian_sigma);
    cfg.model.pad_fill = m.value("pad_fill", cfg.model.pad_fill);
    if (m.contains("norm")) {
      if (m["norm"].contains("mean")) cfg.model.norm.mean = m["norm"]["mean"];
      if (m["norm"].contains("std")) cfg.model.norm.std = m["norm"]["std"];
    }
    if (m.contains("face_enc")) cfg.model.face_enc = encoder_from_json(m["face_enc"], cfg.model.face_enc);
    if (m.contains("eye_enc")) cfg.model.eye_enc = encoder_from_json(m["eye_enc"], cfg.model.eye_enc);
    if (m.contains("scene_enc"))
      cfg.model.scene_enc = encoder_from_json(m["scene_enc"], cfg.model.scene_enc);
  }
  cfg.model.fusion.dim = cfg.model.face_enc.projection_dim;

  if (j.contains("split")) {
    const auto& sp = j["split"];
    const std::string mode = sp.value("mode", std::string("counts"));
    if (mode == "counts") {
      cfg.split.mode = SplitChoice::Mode::Counts;
      cfg.split.n_train = sp.value("train", cfg.split.n_train);
      cfg.split.n_val = sp.value("val", cfg.split.n_val);
      cfg.split.n_test = sp.value("test", cfg.split.n_test);
    } else if (mode == "ratio") {
      cfg.split.mode = SplitChoice::Mode::Ratio;
      cfg.split.r_train = sp.value("train", cfg.split.r_train);
      cfg.split.r_val = sp.value("val", cfg.split.r_val);
      cfg.split.r_test = sp.value("test", cfg.split.r_test);
    } else if (mode == "explicit") {
      cfg.split.mode = SplitChoice::Mode::Explicit;
      cfg.split.explicit_spec.train_drivers =
          sp.value("train", std::vector<std::string>{});
      cfg.split.explicit_spec.val_drivers = sp.value("val", std::vector<std::string>{});
      cfg.split.explicit_spec.test_drivers = sp.value("test", std::vector<std::string>{});
    } else {
      throw ParseError("config: unknown split mode '" + mode + "'");
    }
  }

  validate_model_config(cfg.model);
  if (cfg.lr < 0.0) throw ParseError("config: lr must be >= 0");
  if (cfg.batch_size < 1) throw ParseError("config: batch_size must be >= 1");
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ParseError("config: invalid JSON in " + path);
  return train_config_from_json(j);
}

json synth_config_to_json(const SynthConfig& cfg) {
  json j;
  j["n_drivers"] = cfg.n_drivers;
  j["face_size"] = cfg.face_size;
  j["scene_size"] = cfg.scene_size;
  j["iris_gain"] = cfg.iris_gain;
  j["frac_one_iris_invalid"] = cfg.frac_one_iris_invalid;
  j["frac_both_iris_invalid"] = cfg.frac_both_iris_invalid;
  j["focal_x"] = cfg.focal_x;
  j["focal_y"] = cfg.focal_y;
  j["blob_sigma_frac"] = cfg.blob_sigma_frac;
  j["noise_amp"] = cfg.noise_amp;
  return j;
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig cfg;
  cfg.n_drivers = j.value("n_drivers", cfg.n_drivers);
  cfg.face_size = j.value("face_size", cfg.face_size);
  cfg.scene_size = j.value("scene_size", cfg.scene_size);
  cfg.iris_gain = j.value("iris_gain", cfg.iris_gain);
  cfg.frac_one_iris_invalid = j.value("frac_one_iris_invalid", cfg.frac_one_iris_invalid);
  cfg.frac_both_iris_invalid = j.value("frac_both_iris_invalid", cfg.frac_both_iris_invalid);
  cfg.focal_x = j.value("focal_x", cfg.focal_x);
  cfg.focal_y = j.value("focal_y", cfg.focal_y);
  cfg.blob_sigma_frac = j.value("blob_sigma_frac", cfg.blob_sigma_frac);
  cfg.noise_amp = j.value("noise_amp", cfg.noise_amp);
  return cfg;
}

}  // namespace gazekit
