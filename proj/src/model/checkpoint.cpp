#include "t3d/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "t3d/voxel/io.hpp"

namespace t3d::model {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in native little-endian order");

constexpr std::string_view kAdamM = "adam.m/";
constexpr std::string_view kAdamV = "adam.v/";

std::string header_length_bytes(std::uint64_t n) {
  std::string out(8, '\0');
  for (int i = 0; i < 8; ++i) out[i] = static_cast<char>((n >> (8 * i)) & 0xff);
  return out;
}

std::uint64_t read_header_length(std::string_view bytes) {
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[kCheckpointMagic.size() + i])) << (8 * i);
  return n;
}

nlohmann::json parse_header(std::string_view bytes, std::size_t& payload_start) {
  const std::size_t prefix = kCheckpointMagic.size() + 8;
  if (bytes.size() < prefix || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw MalformedHeader("not a checkpoint: missing T3DCKPT1 magic");
  }
  const std::uint64_t len = read_header_length(bytes);
  if (len > bytes.size() - prefix) throw TruncatedPayload("checkpoint header is truncated");
  payload_start = prefix + len;
  try {
    return nlohmann::json::parse(bytes.substr(prefix, len));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeader(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
}

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  nlohmann::json header;
  header["format"] = std::string(kCheckpointMagic);
  header["model"] = to_json(c.model);
  header["training"] = c.training;
  header["summary"] = c.summary;
  header["seed"] = c.seed;
  header["epoch"] = c.epoch;
  header["step"] = c.step;
  if (c.optimizer_steps) header["optimizer"] = {{"name", "adam"}, {"steps", *c.optimizer_steps}};
  nlohmann::json networks = nlohmann::json::array();
  for (const auto& spec : network_specs(c.model)) networks.push_back(to_json(spec));
  header["networks"] = networks;

  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, array] : c.arrays) {
    if (element_count(array.shape) != array.values.size()) throw DimensionMismatch("array '" + name + "' does not match its shape");
    manifest.push_back({{"name", name}, {"shape", array.shape}, {"offset", offset}, {"count", array.values.size()}});
    offset += array.values.size() * sizeof(float);
  }
  header["arrays"] = manifest;

  const std::string text = header.dump();
  std::string out;
  out.reserve(kCheckpointMagic.size() + 8 + text.size() + offset);
  out += kCheckpointMagic;
  out += header_length_bytes(text.size());
  out += text;
  for (const auto& [name, array] : c.arrays) {
    const std::size_t at = out.size();
    out.resize(at + array.values.size() * sizeof(float));
    std::memcpy(out.data() + at, array.values.data(), array.values.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  std::size_t start = 0;
  const nlohmann::json header = parse_header(bytes, start);
  Checkpoint c;
  try {
    c.model = model_config_from_json(header.at("model"));
    c.training = header.value("training", nlohmann::json::object());
    c.summary = header.value("summary", nlohmann::json::object());
    c.seed = header.at("seed").get<std::uint64_t>();
    c.epoch = header.at("epoch").get<int>();
    c.step = header.at("step").get<std::int64_t>();
    if (header.contains("optimizer")) c.optimizer_steps = header.at("optimizer").at("steps").get<std::int64_t>();
    const std::string_view payload = bytes.substr(start);
    std::uint64_t expected = 0;
    for (const auto& entry : header.at("arrays")) {
      Checkpoint::Array array;
      array.shape = entry.at("shape").get<std::vector<int>>();
      const auto count = entry.at("count").get<std::size_t>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (count != element_count(array.shape)) throw MalformedHeader("array count disagrees with its shape");
      if (offset != expected) throw MalformedHeader("array offsets are not contiguous");
      if (offset + count * sizeof(float) > payload.size()) throw TruncatedPayload("checkpoint payload is truncated");
      array.values.resize(count);
      std::memcpy(array.values.data(), payload.data() + offset, count * sizeof(float));
      expected = offset + count * sizeof(float);
      c.arrays.emplace(entry.at("name").get<std::string>(), std::move(array));
    }
    if (expected != payload.size()) throw DimensionMismatch("checkpoint payload is longer than its manifest");
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeader(std::string("checkpoint header: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  voxel::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(voxel::read_file(path)); }

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string prefix(kCheckpointMagic.size() + 8, '\0');
  in.read(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  if (in.gcount() != static_cast<std::streamsize>(prefix.size()) || prefix.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw MalformedHeader("not a checkpoint: " + path.string());
  }
  std::string text(read_header_length(prefix), '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  if (in.gcount() != static_cast<std::streamsize>(text.size())) throw TruncatedPayload("checkpoint header is truncated");
  std::size_t start = 0;
  return parse_header(prefix + text, start);
}

Checkpoint snapshot(const ReconstructionModel<float>& model, const Adam* optimizer) {
  Checkpoint c;
  c.model = model.config();
  for (const auto& p : model.parameters()) {
    c.arrays[p.name] = {p.shape, std::vector<float>(p.value.begin(), p.value.end())};
  }
  if (optimizer) {
    c.optimizer_steps = optimizer->steps();
    for (const auto& [name, mom] : optimizer->moments()) {
      const auto& shape = c.arrays.at(name).shape;
      c.arrays[std::string(kAdamM) + name] = {shape, mom.m};
      c.arrays[std::string(kAdamV) + name] = {shape, mom.v};
    }
  }
  return c;
}

void load_parameters(ReconstructionModel<float>& model, const Checkpoint& c) {
  if (!(model.config() == c.model)) throw DimensionMismatch("checkpoint describes a different model");
  for (auto& p : model.parameters()) {
    const auto it = c.arrays.find(p.name);
    if (it == c.arrays.end()) throw MalformedHeader("checkpoint lacks parameter '" + p.name + "'");
    if (it->second.shape != p.shape) throw DimensionMismatch("parameter '" + p.name + "' has a different shape");
    std::copy(it->second.values.begin(), it->second.values.end(), p.value.begin());
  }
}

ReconstructionModel<float> restore_model(const Checkpoint& c) {
  ReconstructionModel<float> model(c.model);
  load_parameters(model, c);
  return model;
}

Adam restore_optimizer(const Checkpoint& c, AdamConfig config) {
  if (!c.optimizer_steps) throw InvalidArgument("checkpoint carries no optimizer state");
  std::map<std::string, Adam::Moments> moments;
  for (const auto& [name, array] : c.arrays) {
    if (name.rfind(kAdamM, 0) != 0) continue;
    const std::string param = name.substr(kAdamM.size());
    const auto v = c.arrays.find(std::string(kAdamV) + param);
    if (v == c.arrays.end()) throw MalformedHeader("optimizer state for '" + param + "' is incomplete");
    moments[param] = {array.values, v->second.values};
  }
  Adam adam(config);
  adam.restore(*c.optimizer_steps, std::move(moments));
  return adam;
}

}  // namespace t3d::model
