#pragma once

#include <string>
#include <vector>

#include "gazekit/train.hpp"

namespace gazekit {

// On-disk layout: u64 header length, JSON header (format version, config,
// parameter registry, training extras), u64 payload length, float32 payload
// in registry order, trailing u64 FNV-1a checksum of the payload. Optimizer
// moments ride along under "adam.m."/"adam.v." names so a resumed run
// continues the curve.
inline constexpr int kCheckpointFormatVersion = 1;

struct LoadedCheckpoint {
  TrainState state;
  TrainConfig config;
  std::vector<std::string> train_drivers;
};

void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& cfg,
                     std::span<const std::string> train_drivers);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace gazekit
