#include "lssltc/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace lssltc {

namespace {

class HeaderReader {
public:
    HeaderReader(std::span<const std::uint8_t> bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

    std::size_t pos() const { return pos_; }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t read_uint(const char* field, std::size_t* token_start = nullptr) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        if (token_start) *token_start = start;
        std::size_t value = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            if (value > (1u << 24)) throw ParseError(std::string("netpbm: ") + field + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw ParseError(std::string("netpbm: expected ") + field, pos_);
        return value;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    void expect_single_space() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw ParseError("netpbm: expected whitespace before raster", pos_);
        }
        ++pos_;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
};

}  // namespace

std::uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

Image decode_netpbm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw ParseError("netpbm: missing P5/P6 magic", 0);
    }
    const std::size_t channels = bytes[1] == '6' ? 3 : 1;
    HeaderReader rd(bytes, 2);
    const std::size_t width = rd.read_uint("width");
    const std::size_t height = rd.read_uint("height");
    std::size_t maxval_pos = 0;
    const std::size_t maxval = rd.read_uint("maxval", &maxval_pos);
    if (maxval != 255) {
        throw ParseError("netpbm: unsupported maxval " + std::to_string(maxval) + " (only 255)", maxval_pos);
    }
    if (width == 0 || height == 0) throw ParseError("netpbm: zero image dimension", maxval_pos);
    rd.expect_single_space();
    const std::size_t raster = rd.pos();
    const std::size_t expected = width * height * channels;
    if (bytes.size() - raster < expected) {
        throw ParseError("netpbm: truncated raster, expected " + std::to_string(expected) + " bytes, have " +
                             std::to_string(bytes.size() - raster),
                         bytes.size());
    }
    if (bytes.size() - raster > expected) {
        throw ParseError("netpbm: trailing bytes after raster", raster + expected);
    }
    Image img(channels, height, width);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < channels; ++c)
                img.at(c, y, x) = static_cast<float>(bytes[raster + (y * width + x) * channels + c]) / 255.0f;
    return img;
}

std::vector<std::uint8_t> encode_netpbm(const Image& image, std::string_view comment) {
    if (image.channels != 1 && image.channels != 3) {
        throw IoError("netpbm: cannot encode " + std::to_string(image.channels) + "-channel image");
    }
    std::string header = image.channels == 3 ? "P6\n" : "P5\n";
    if (!comment.empty()) {
        header += "# ";
        header += comment;
        header += '\n';
    }
    header += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + image.data.size());
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x)
            for (std::size_t c = 0; c < image.channels; ++c) out.push_back(quantize(image.at(c, y, x)));
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Image read_image(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return decode_netpbm(bytes);
}

void write_image(const std::filesystem::path& path, const Image& image, std::string_view comment) {
    const auto bytes = encode_netpbm(image, comment);
    write_file(path, bytes);
}

}  // namespace lssltc
