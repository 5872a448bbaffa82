#include "gazekit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "gazekit/rng.hpp"

namespace gazekit {

namespace {

using nlohmann::json;

json box_to_json(const EyeBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

EyeBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("eye box must be [x,y,w,h]");
  return EyeBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void validate_record(const SampleRecord& r) {
  if (r.driver_id.empty()) throw ValueError("missing driver_id");
  if (r.face_path.empty() || r.scene_path.empty()) throw ValueError("missing image paths");
  for (double v : r.gaze_norm)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw ValueError("gaze_norm must lie in the unit square");
  if (r.gaze_vec) {
    double n = 0.0;
    for (double v : *r.gaze_vec) {
      if (!std::isfinite(v)) throw ValueError("gaze_vec must be finite");
      n += v * v;
    }
    if (std::fabs(std::sqrt(n) - 1.0) > 1e-6) throw ValueError("gaze_vec must be unit norm");
  }
  for (const auto& box : {r.eye_box_left, r.eye_box_right})
    if (box && (box->w <= 0.0 || box->h <= 0.0 || box->x < 0.0 || box->y < 0.0))
      throw ValueError("eye box must have positive extent and non-negative origin");
}

}  // namespace

std::string record_to_json_line(const SampleRecord& r) {
  json j;
  j["driver_id"] = r.driver_id;
  j["face_path"] = r.face_path;
  j["scene_path"] = r.scene_path;
  json boxes = json::object();
  if (r.eye_box_left) boxes["left"] = box_to_json(*r.eye_box_left);
  if (r.eye_box_right) boxes["right"] = box_to_json(*r.eye_box_right);
  if (!boxes.empty()) j["eye_boxes"] = boxes;
  json irises = json::object();
  if (r.iris_left_px) irises["left"] = json::array({(*r.iris_left_px)[0], (*r.iris_left_px)[1]});
  if (r.iris_right_px)
    irises["right"] = json::array({(*r.iris_right_px)[0], (*r.iris_right_px)[1]});
  if (!irises.empty()) j["iris_centers"] = irises;
  j["gaze_norm"] = json::array({r.gaze_norm[0], r.gaze_norm[1]});
  if (r.gaze_vec)
    j["gaze_vec"] = json::array({(*r.gaze_vec)[0], (*r.gaze_vec)[1], (*r.gaze_vec)[2]});
  j["timestamp"] = r.timestamp;
  return j.dump();
}

SampleRecord record_from_json_line(const std::string& line) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("not a JSON object");
  SampleRecord r;
  r.driver_id = j.value("driver_id", std::string());
  r.face_path = j.value("face_path", std::string());
  r.scene_path = j.value("scene_path", std::string());
  if (j.contains("eye_boxes")) {
    const auto& b = j["eye_boxes"];
    if (b.contains("left")) r.eye_box_left = box_from_json(b["left"]);
    if (b.contains("right")) r.eye_box_right = box_from_json(b["right"]);
  }
  if (j.contains("iris_centers")) {
    const auto& ic = j["iris_centers"];
    auto read_pt = [](const json& p) -> std::array<double, 2> {
      if (!p.is_array() || p.size() != 2) throw ParseError("iris center must be [x,y]");
      return {p[0].get<double>(), p[1].get<double>()};
    };
    if (ic.contains("left")) r.iris_left_px = read_pt(ic["left"]);
    if (ic.contains("right")) r.iris_right_px = read_pt(ic["right"]);
  }
  if (j.contains("gaze_norm")) {
    const auto& g = j["gaze_norm"];
    if (!g.is_array() || g.size() != 2) throw ParseError("gaze_norm must be [u,v]");
    r.gaze_norm = {g[0].get<double>(), g[1].get<double>()};
  }
  if (j.contains("gaze_vec") && !j["gaze_vec"].is_null()) {
    const auto& g = j["gaze_vec"];
    if (!g.is_array() || g.size() != 3) throw ParseError("gaze_vec must be [x,y,z]");
    r.gaze_vec = {{g[0].get<double>(), g[1].get<double>(), g[2].get<double>()}};
  }
  r.timestamp = j.value("timestamp", 0.0);
  validate_record(r);
  return r;
}

std::vector<SampleRecord> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);
  std::vector<SampleRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValueError& e) {
      throw ValueError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_manifest(const std::string& path, std::span<const SampleRecord> records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path);
  for (const auto& r : records) f << record_to_json_line(r) << "\n";
  if (!f) throw IoError("manifest write failed: " + path);
}

std::vector<std::string> drivers_in_order(std::span<const SampleRecord> records) {
  std::vector<std::string> order;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.driver_id).second) order.push_back(r.driver_id);
  return order;
}

namespace {

SplitResult assign_by_spec(std::span<const SampleRecord> records, const SplitSpec& spec) {
  std::set<std::string> train(spec.train_drivers.begin(), spec.train_drivers.end());
  std::set<std::string> val(spec.val_drivers.begin(), spec.val_drivers.end());
  std::set<std::string> test(spec.test_drivers.begin(), spec.test_drivers.end());
  for (const auto& d : train)
    if (val.count(d) || test.count(d))
      throw ValueError("split_by_driver: driver '" + d + "' appears in two partitions");
  for (const auto& d : val)
    if (test.count(d))
      throw ValueError("split_by_driver: driver '" + d + "' appears in two partitions");
  SplitResult out;
  for (const auto& r : records) {
    if (train.count(r.driver_id))
      out.train.push_back(r);
    else if (val.count(r.driver_id))
      out.val.push_back(r);
    else if (test.count(r.driver_id))
      out.test.push_back(r);
    else
      throw ValueError("split_by_driver: driver '" + r.driver_id +
                       "' is not assigned to any partition");
  }
  if (out.val.empty()) out.warnings.push_back("validation split is empty");
  if (out.test.empty()) out.warnings.push_back("test split is empty");
  return out;
}

}  // namespace

SplitResult split_by_driver(std::span<const SampleRecord> records, const SplitSpec& spec) {
  return assign_by_spec(records, spec);
}

SplitResult split_by_counts(std::span<const SampleRecord> records, int n_train, int n_val,
                            int n_test) {
  const auto order = drivers_in_order(records);
  if (n_train < 0 || n_val < 0 || n_test < 0 ||
      std::size_t(n_train) + std::size_t(n_val) + std::size_t(n_test) != order.size())
    throw ValueError("split_by_counts: counts " + std::to_string(n_train) + "/" +
                     std::to_string(n_val) + "/" + std::to_string(n_test) + " do not cover " +
                     std::to_string(order.size()) + " drivers");
  SplitSpec spec;
  spec.train_drivers.assign(order.begin(), order.begin() + n_train);
  spec.val_drivers.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  spec.test_drivers.assign(order.begin() + n_train + n_val, order.end());
  return assign_by_spec(records, spec);
}

SplitResult split_by_ratio(std::span<const SampleRecord> records, double r_train, double r_val,
                           double r_test, std::uint64_t seed) {
  if (r_train <= 0.0 || r_val < 0.0 || r_test < 0.0)
    throw ValueError("split_by_ratio: ratios must be non-negative with positive train share");
  const double total = r_train + r_val + r_test;
  std::vector<std::string> order = drivers_in_order(records);
  if (order.empty()) throw ValueError("split_by_ratio: no records");
  // Canonical order first so the partition depends only on (drivers, seed),
  // not on the record ordering.
  std::sort(order.begin(), order.end());
  Rng rng = Rng(seed).fork("split");
  rng.shuffle(order);

  const auto n = std::int64_t(order.size());
  std::int64_t n_val = std::int64_t(std::floor(r_val / total * double(n)));
  std::int64_t n_test = std::int64_t(std::floor(r_test / total * double(n)));
  std::int64_t n_train = n - n_val - n_test;
  if (n_train < 1) {
    n_train = 1;
    n_val = std::min(n_val, n - 1);
    n_test = n - n_train - n_val;
  }
  SplitSpec spec;
  spec.train_drivers.assign(order.begin(), order.begin() + n_train);
  spec.val_drivers.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  spec.test_drivers.assign(order.begin() + n_train + n_val, order.end());
  return assign_by_spec(records, spec);
}

}  // namespace gazekit
