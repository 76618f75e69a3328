#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "network/model.hpp"

namespace vos::net {

// Binary container, all integers and doubles little-endian:
//
//   "VOSCKPT\0"                 8-byte magic
//   u32 version (1)
//   u32 input_channels, u32 upsample_mode, u32 convs_per_level,
//   u32 kernel_size, u8 skip_connections, u32 filter_count, u32 filters[]
//   u32 param_count
//   per param: u32 name_len, name bytes, u32 rank, u64 dims[rank], f64 values[]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

} // namespace vos::net
