#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "common/grid.hpp"

namespace vos::data {

// Binary netpbm: P6 for RGB frames, P5 for label masks (gray = label).
// Encoders always write "P6\n<w> <h>\n255\n"; decoders accept comments and
// arbitrary whitespace in the header but require maxval 255.
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_pgm(const InstanceMask& mask);
InstanceMask decode_pgm(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

RgbImage read_ppm(const std::filesystem::path& path);
InstanceMask read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
void write_pgm(const std::filesystem::path& path, const InstanceMask& mask);

} // namespace vos::data
