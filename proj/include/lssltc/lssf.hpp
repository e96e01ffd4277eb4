#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lssltc/image.hpp"

namespace lssltc {

// LSSF container:
//   "LSSF" | version u8 | channels u8 | height u32 LE | width u32 LE |
//   channels*height*width float32 LE, channel-major.
inline constexpr std::uint8_t kLssfVersion = 1;

std::vector<std::uint8_t> encode_lssf(const ImageT<float>& planes);
ImageT<float> decode_lssf(std::span<const std::uint8_t> bytes);

void write_lssf(const std::filesystem::path& path, const ImageT<float>& planes);
ImageT<float> read_lssf(const std::filesystem::path& path);

}  // namespace lssltc
