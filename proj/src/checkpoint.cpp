#include "gazekit/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gazekit/config.hpp"
#include "gazekit/rng.hpp"

namespace gazekit {

namespace {

using nlohmann::json;

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint64_t read_u64(const std::vector<std::uint8_t>& buf, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[pos + std::size_t(i)]) << (8 * i);
  return v;
}

void append_f32_array(std::vector<std::uint8_t>& out, const std::vector<double>& xs) {
  for (double x : xs) {
    const float f = float(x);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(bits >> (8 * i)));
  }
}

void read_f32_array(const std::vector<std::uint8_t>& buf, std::size_t& pos,
                    std::vector<double>& xs) {
  for (auto& x : xs) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= std::uint32_t(buf[pos + std::size_t(i)]) << (8 * i);
    pos += 4;
    float f;
    std::memcpy(&f, &bits, 4);
    x = double(f);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& cfg,
                     std::span<const std::string> train_drivers) {
  const auto& entries = state.model.params.entries();
  if (state.opt.m.size() != entries.size())
    throw ValueError("save_checkpoint: optimizer state does not match parameters");

  json registry = json::array();
  std::vector<std::uint8_t> payload;
  auto add_entry = [&](const std::string& name, const Shape& shape,
                       const std::vector<double>& values) {
    registry.push_back({{"name", name}, {"shape", shape}});
    append_f32_array(payload, values);
  };
  for (const auto& [name, t] : entries) add_entry(name, t.shape(), t.values());
  for (std::size_t i = 0; i < entries.size(); ++i)
    add_entry("adam.m." + entries[i].first, entries[i].second.shape(), state.opt.m[i]);
  for (std::size_t i = 0; i < entries.size(); ++i)
    add_entry("adam.v." + entries[i].first, entries[i].second.shape(), state.opt.v[i]);

  json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["config"] = train_config_to_json(cfg);
  header["registry"] = registry;
  header["extras"] = {{"next_epoch", state.next_epoch},
                      {"opt_step", state.opt.step},
                      {"train_drivers", std::vector<std::string>(train_drivers.begin(),
                                                                 train_drivers.end())}};
  const std::string header_str = header.dump();

  std::vector<std::uint8_t> out;
  append_u64(out, header_str.size());
  out.insert(out.end(), header_str.begin(), header_str.end());
  append_u64(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
  append_u64(out, fnv1a64(payload.data(), payload.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  if (!f) throw IoError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());

  if (buf.size() < 8) throw CheckpointError("checkpoint truncated: missing header length");
  const std::uint64_t header_len = read_u64(buf, 0);
  if (header_len > buf.size() || buf.size() < 8 + header_len + 8)
    throw CheckpointError("checkpoint truncated: incomplete header");
  const std::string header_str(buf.begin() + 8, buf.begin() + 8 + std::ptrdiff_t(header_len));
  const json header = json::parse(header_str, nullptr, false);
  if (header.is_discarded()) throw CheckpointError("checkpoint header is not valid JSON");
  const int version = header.value("format_version", -1);
  if (version != kCheckpointFormatVersion)
    throw CheckpointError("checkpoint format version " + std::to_string(version) +
                          " is not supported");

  const std::size_t payload_pos = 8 + std::size_t(header_len);
  const std::uint64_t payload_len = read_u64(buf, payload_pos);
  if (payload_len > buf.size() || buf.size() < payload_pos + 8 + payload_len + 8)
    throw CheckpointError("checkpoint truncated: incomplete payload");
  const std::size_t data_pos = payload_pos + 8;
  const std::uint64_t stored_sum = read_u64(buf, data_pos + std::size_t(payload_len));
  const std::uint64_t actual_sum = fnv1a64(buf.data() + data_pos, std::size_t(payload_len));
  if (stored_sum != actual_sum)
    throw CheckpointError("checkpoint checksum mismatch (corrupt payload)");

  LoadedCheckpoint out;
  out.config = train_config_from_json(header.at("config"));
  out.state = make_train_state(out.config);

  // The expected registry: parameters, then adam.m.*, then adam.v.*.
  auto& entries = out.state.model.params.entries();
  std::vector<std::pair<std::string, Shape>> expected;
  expected.reserve(entries.size() * 3);
  for (const auto& [name, t] : entries) expected.emplace_back(name, t.shape());
  for (const auto& [name, t] : entries) expected.emplace_back("adam.m." + name, t.shape());
  for (const auto& [name, t] : entries) expected.emplace_back("adam.v." + name, t.shape());

  const json& registry = header.at("registry");
  if (!registry.is_array() || registry.size() != expected.size())
    throw CheckpointError("checkpoint registry has " + std::to_string(registry.size()) +
                          " entries, expected " + std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const std::string name = registry[i].value("name", std::string());
    const Shape shape = registry[i].value("shape", Shape{});
    if (name != expected[i].first || shape != expected[i].second)
      throw CheckpointError("checkpoint registry mismatch at '" + name + "' (expected '" +
                            expected[i].first + "' " + shape_str(expected[i].second) + ")");
  }

  std::uint64_t total_values = 0;
  for (const auto& [name, shape] : expected) total_values += std::uint64_t(shape_size(shape));
  if (total_values * 4 != payload_len)
    throw CheckpointError("checkpoint payload size does not match the registry");

  std::size_t pos = data_pos;
  for (auto& [name, t] : entries) read_f32_array(buf, pos, t.values());
  for (std::size_t i = 0; i < entries.size(); ++i) read_f32_array(buf, pos, out.state.opt.m[i]);
  for (std::size_t i = 0; i < entries.size(); ++i) read_f32_array(buf, pos, out.state.opt.v[i]);

  const json& extras = header.at("extras");
  out.state.next_epoch = extras.value("next_epoch", 1);
  out.state.opt.step = extras.value("opt_step", std::int64_t(0));
  out.train_drivers = extras.value("train_drivers", std::vector<std::string>{});
  return out;
}

}  // namespace gazekit
