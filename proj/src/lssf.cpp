#include "lssltc/lssf.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

namespace lssltc {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
    return v;
}

constexpr std::size_t kHeaderSize = 4 + 1 + 1 + 4 + 4;

}  // namespace

std::vector<std::uint8_t> encode_lssf(const ImageT<float>& planes) {
    if (planes.channels == 0 || planes.channels > 255) {
        throw IoError("lssf: channel count must be in 1..255, got " + std::to_string(planes.channels));
    }
    std::vector<std::uint8_t> out{'L', 'S', 'S', 'F', kLssfVersion, static_cast<std::uint8_t>(planes.channels)};
    put_u32(out, static_cast<std::uint32_t>(planes.height));
    put_u32(out, static_cast<std::uint32_t>(planes.width));
    out.reserve(kHeaderSize + planes.data.size() * 4);
    for (float v : planes.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

ImageT<float> decode_lssf(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize) throw ParseError("lssf: truncated header", bytes.size());
    if (std::memcmp(bytes.data(), "LSSF", 4) != 0) throw ParseError("lssf: bad magic", 0);
    if (bytes[4] != kLssfVersion) throw ParseError("lssf: unsupported version " + std::to_string(bytes[4]), 4);
    const std::size_t channels = bytes[5];
    const std::size_t height = get_u32(bytes, 6);
    const std::size_t width = get_u32(bytes, 10);
    const std::size_t count = channels * height * width;
    if (bytes.size() - kHeaderSize != count * 4) {
        throw ParseError("lssf: payload holds " + std::to_string(bytes.size() - kHeaderSize) + " bytes, header declares " +
                             std::to_string(count * 4),
                         std::min(bytes.size(), kHeaderSize + count * 4));
    }
    ImageT<float> planes(channels, height, width);
    for (std::size_t i = 0; i < count; ++i) planes.data[i] = std::bit_cast<float>(get_u32(bytes, kHeaderSize + 4 * i));
    return planes;
}

void write_lssf(const std::filesystem::path& path, const ImageT<float>& planes) {
    write_file(path, encode_lssf(planes));
}

ImageT<float> read_lssf(const std::filesystem::path& path) {
    return decode_lssf(read_file(path));
}

}  // namespace lssltc
