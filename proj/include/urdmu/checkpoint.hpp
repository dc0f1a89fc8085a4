#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "urdmu/model.hpp"

namespace urdmu {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "URDM", u32 version, u32 tensor count, then per tensor: u16 name length,
// UTF-8 name, u8 rank, u32 dims[rank], f64 payload (all little-endian);
// followed by the TrainConfig as key=value lines.
std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);

// Rebuilds the model from the embedded config and fills every tensor.
// Throws FormatFault on bad magic/version, truncation, or an inventory that
// does not match the config.
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace urdmu
