// SPDX-License-Identifier: Apache-2.0
//
// "MEGC" checkpoint container:
//   magic "MEGC" | version u32 | metadata length u32 | metadata (UTF-8 JSON)
//   | entry count u32 | per entry: name length u16, name, rank u8,
//   dims (u32 each), float32 values. All integers little-endian.
// Metadata carries "config" (ModelConfig), "seed", "epoch" and
// "val_f1_macro". Entries are the trainable parameters followed by buffers.
#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "megc/model.hpp"

namespace megc::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  ConformerModel model;
  nlohmann::json metadata;
};

/// `metadata` is copied and its "config" key set from the model.
std::string encode_checkpoint(const ConformerModel& model, const nlohmann::json& metadata);
LoadedCheckpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const ConformerModel& model,
                     const nlohmann::json& metadata);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace megc::nn
