#pragma once

#include <string>

#include <json.hpp>

#include "gazekit/synth.hpp"
#include "gazekit/train.hpp"

namespace gazekit {

// Fully-resolved, self-contained snapshot (no presets left unexpanded);
// parsing this snapshot back reproduces the config exactly.
nlohmann::json train_config_to_json(const TrainConfig& cfg);

// Accepts partial documents; every missing key falls back to its default.
// "model_preset": "full" | "miniature" selects the encoder family before
// field-level overrides apply.
TrainConfig train_config_from_json(const nlohmann::json& j);

TrainConfig load_train_config(const std::string& path);

nlohmann::json synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

}  // namespace gazekit
