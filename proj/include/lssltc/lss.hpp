#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "lssltc/image.hpp"

namespace lssltc {

/// Local structural similarity parameters. Borders are always reflected.
struct LssConfig {
    std::size_t patch_size = 5;     // K, odd
    std::size_t search_radius = 5;  // R
    double epsilon = 1e-8;

    /// Throws std::invalid_argument when K is even/zero or R is zero.
    void validate() const;
    /// (2R+1)^2 - 1: the center offset is not a neighbor.
    std::size_t neighbor_count() const;
};

/// Per-pixel statistics of the neighbor similarity set: mean, max and
/// population standard deviation, stored channel-major as 3 x H x W.
template <typename T>
struct LssMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<T> data;

    LssMap() = default;
    LssMap(std::size_t h, std::size_t w) : height(h), width(w), data(3 * h * w, T(0)) {}

    std::span<T> mean_channel() { return {data.data(), height * width}; }
    std::span<T> max_channel() { return {data.data() + height * width, height * width}; }
    std::span<T> std_channel() { return {data.data() + 2 * height * width, height * width}; }
    std::span<const T> mean_channel() const { return {data.data(), height * width}; }
    std::span<const T> max_channel() const { return {data.data() + height * width, height * width}; }
    std::span<const T> std_channel() const { return {data.data() + 2 * height * width, height * width}; }

    /// The map as a 3-channel planar image (mean, max, std).
    ImageT<T> as_planes() const {
        ImageT<T> img(3, height, width);
        img.data = data;
        return img;
    }
};

/// Zero-centers and L2-normalizes a flattened patch: (p - mean) / (|p - mean| + eps).
template <typename T>
std::vector<T> normalize_patch(std::span<const T> patch, T epsilon);

/// Dot product of two normalized descriptors, clamped to [-1, 1].
template <typename T>
T patch_similarity(std::span<const T> a, std::span<const T> b);

/// Dense stride-1 LSS map with full H x W support. Descriptors are computed
/// once over the reflect-padded grid and then gathered per neighbor offset.
/// `threads` > 1 splits rows across workers; the result does not depend on it.
template <typename T>
LssMap<T> compute_lss_map(const ImageT<T>& image, const LssConfig& cfg, unsigned threads = 1);

/// Writes lss_mean.pgm, lss_max.pgm and lss_std.pgm into `out_dir`. Each
/// channel is min-max scaled to 0..255; a constant channel maps to 0.
template <typename T>
void export_explainability(const LssMap<T>& map, const std::filesystem::path& out_dir,
                           std::string_view comment = {});

/// Min-max normalized 8-bit levels of one channel, as written by export_explainability.
template <typename T>
std::vector<std::uint8_t> channel_to_gray(std::span<const T> channel);

}  // namespace lssltc
