// SPDX-License-Identifier: Apache-2.0
#include "megc/checkpoint.hpp"

#include <map>

#include "megc/error.hpp"
#include "megc/io.hpp"

namespace megc::nn {

std::string encode_checkpoint(const ConformerModel& model, const nlohmann::json& metadata) {
  nlohmann::json meta = metadata;
  meta["config"] = model.config();
  const std::string meta_text = meta.dump();

  io::ByteWriter w;
  w.bytes("MEGC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.bytes(meta_text);
  const auto& params = model.parameters();
  const auto& buffers = model.buffers();
  w.u32(static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (const auto* group : {&params, &buffers}) {
    for (const auto& p : *group) {
      w.string16(p.name);
      const auto& shape = p.tensor.shape();
      w.u8(static_cast<std::uint8_t>(shape.size()));
      for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
      for (double v : p.tensor.values()) w.f32(static_cast<float>(v));
    }
  }
  return w.data();
}

LoadedCheckpoint decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.bytes(4) != "MEGC") throw FormatError("not a MEGC checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = r.u32();
  LoadedCheckpoint out;
  try {
    out.metadata = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  if (!out.metadata.contains("config")) throw FormatError("checkpoint metadata lacks config");
  ModelConfig config;
  try {
    config = out.metadata.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  out.model = ConformerModel::init(config, 0);

  std::map<std::string, Tensor> slots;
  for (auto& p : out.model.parameters()) slots.emplace(p.name, p.tensor);
  for (auto& p : out.model.buffers()) slots.emplace(p.name, p.tensor);

  const auto count = r.u32();
  if (count != slots.size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " entries, config implies " +
                      std::to_string(slots.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.string16();
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError("unexpected checkpoint entry '" + name + "'");
    const auto rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != it->second.shape()) {
      throw FormatError("entry '" + name + "' has shape " + shape_string(shape) + ", expected " +
                        shape_string(it->second.shape()));
    }
    auto values = it->second.mutable_values();
    for (double& v : values) v = static_cast<double>(r.f32());
    slots.erase(it);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint entries");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ConformerModel& model,
                     const nlohmann::json& metadata) {
  io::write_file_atomic(path, encode_checkpoint(model, metadata));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace megc::nn
