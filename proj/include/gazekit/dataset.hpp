#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazekit/errors.hpp"

namespace gazekit {

struct EyeBox {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;  // face-image pixels
};

// One face/scene/annotation/ground-truth example as stored in the manifest.
struct SampleRecord {
  std::string driver_id;
  std::string face_path;
  std::string scene_path;
  std::optional<EyeBox> eye_box_left;
  std::optional<EyeBox> eye_box_right;
  std::optional<std::array<double, 2>> iris_left_px;   // face-image pixels
  std::optional<std::array<double, 2>> iris_right_px;
  std::array<double, 2> gaze_norm{0.5, 0.5};
  std::optional<std::array<double, 3>> gaze_vec;
  double timestamp = 0.0;
};

// Line-delimited JSON, one record per line, snake_case keys, unknown fields
// ignored. Malformed lines and invariant violations report the line number.
std::vector<SampleRecord> load_manifest(const std::string& path);
void save_manifest(const std::string& path, std::span<const SampleRecord> records);
std::string record_to_json_line(const SampleRecord& r);
SampleRecord record_from_json_line(const std::string& line);

struct SplitSpec {
  std::vector<std::string> train_drivers;
  std::vector<std::string> val_drivers;
  std::vector<std::string> test_drivers;
};

struct SplitResult {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> val;
  std::vector<SampleRecord> test;
  std::vector<std::string> warnings;
};

// Drivers in order of first appearance in the records.
std::vector<std::string> drivers_in_order(std::span<const SampleRecord> records);

// Explicit driver assignment; sets must be pairwise disjoint and cover every
// driver present.
SplitResult split_by_driver(std::span<const SampleRecord> records, const SplitSpec& spec);

// First n_train drivers to train, next n_val to validation, remaining n_test
// to test, in order of first appearance.
SplitResult split_by_counts(std::span<const SampleRecord> records, int n_train, int n_val,
                            int n_test);

// Seeded shuffle of the driver list, then a ratio partition.
SplitResult split_by_ratio(std::span<const SampleRecord> records, double r_train, double r_val,
                           double r_test, std::uint64_t seed);

}  // namespace gazekit
