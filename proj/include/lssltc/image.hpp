#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lssltc {

/// Planar (channel-major) image, values nominally in [0, 1].
template <typename T>
struct ImageT {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<T> data;

    ImageT() = default;
    ImageT(std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
        : channels(c), height(h), width(w), data(c * h * w, fill) {}

    T& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
    T at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

    std::span<T> plane(std::size_t c) { return {data.data() + c * height * width, height * width}; }
    std::span<const T> plane(std::size_t c) const { return {data.data() + c * height * width, height * width}; }

    template <typename U>
    ImageT<U> cast() const {
        ImageT<U> out;
        out.channels = channels;
        out.height = height;
        out.width = width;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

using Image = ImageT<float>;

/// Malformed or truncated file. offset() is the byte position where parsing stopped.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Binary netpbm: P6 (RGB) and P5 (gray), maxval 255 only.
Image decode_netpbm(std::span<const std::uint8_t> bytes);
/// `comment`, when non-empty, is emitted as a `# ...` header line.
std::vector<std::uint8_t> encode_netpbm(const Image& image, std::string_view comment = {});

Image read_image(const std::filesystem::path& path);
/// Writes P5 for 1-channel and P6 for 3-channel images. Values are clamped to
/// [0,1] and rounded to the nearest 8-bit level.
void write_image(const std::filesystem::path& path, const Image& image, std::string_view comment = {});

/// 8-bit quantization used by the writers: round(255 * clamp(v, 0, 1)).
std::uint8_t quantize(double v);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace lssltc
