#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gazekit/dataset.hpp"
#include "gazekit/image.hpp"

namespace gazekit {

// Desk-scale scenario generator with analytically known gaze: the scene shows
// a luminous blob at the true point of gaze over structured noise, and the
// schematic face displaces both iris dots proportionally to the gaze offset,
// so the target is recoverable from either modality.
struct SynthConfig {
  int n_drivers = 20;
  int face_size = 64;
  int scene_size = 64;
  // iris_center_norm = 0.5 + iris_gain * (pog - 0.5); injective for gain > 0.
  double iris_gain = 0.8;
  double frac_one_iris_invalid = 0.10;
  double frac_both_iris_invalid = 0.02;
  // gaze_vec = normalize((u-0.5)*focal_x, (v-0.5)*focal_y, 1).
  double focal_x = 1.2;
  double focal_y = 0.8;
  double blob_sigma_frac = 0.06;
  double noise_amp = 30.0;  // 8-bit intensity units
};

struct SyntheticSample {
  SampleRecord record;
  Image face;
  Image scene;
  std::array<double, 2> pog_true{0.5, 0.5};
};

// pog_true i.i.d. uniform on [0.1, 0.9]^2, bit-identical for a given seed.
std::vector<SyntheticSample> generate_synthetic(std::uint64_t seed, int n,
                                                const SynthConfig& cfg);

// Inverse of the generator's iris-displacement rule.
std::array<double, 2> recover_pog_from_iris(std::array<double, 2> iris_center_norm,
                                            const SynthConfig& cfg);

// Pinhole projection of a gaze vector back to the unit square.
std::array<double, 2> project_gaze_vec(const std::array<double, 3>& g, const SynthConfig& cfg);

// Writes <dir>/images/*.ppm and <dir>/manifest.jsonl.
void write_synthetic_dataset(const std::string& dir, std::span<const SyntheticSample> samples);

}  // namespace gazekit
