#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lssltc/image.hpp"

namespace lssltc {

struct SegMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;  // row-major, 0 or 1

    SegMask() = default;
    SegMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
    std::size_t count() const;

    /// Foreground where channel 0 of `image` is >= threshold.
    static SegMask from_image(const Image& image, float threshold = 0.5f);
    Image to_image() const;
};

/// 2|P∩G| / (|P|+|G|); 1 when both masks are empty.
double dice_score(const SegMask& pred, const SegMask& gt);
/// |P∩G| / |P∪G|; 1 when both masks are empty.
double iou_score(const SegMask& pred, const SegMask& gt);

/// Foreground pixels with at least one 4-neighbor outside the mask or the image.
std::vector<std::pair<int, int>> boundary_points(const SegMask& mask);

/// Linear interpolation between closest ranks at q in [0,1]; `values` is sorted in place.
double percentile(std::vector<double>& values, double q);

/// 95th-percentile symmetric boundary Hausdorff distance in pixels, computed
/// with an exact Euclidean distance transform. 0 when both masks are empty,
/// nullopt (undefined) when exactly one is empty.
std::optional<double> hd95(const SegMask& pred, const SegMask& gt);

/// All-pairs reference for hd95 with the same conventions.
std::optional<double> hd95_oracle(const SegMask& pred, const SegMask& gt);

struct MetricRow {
    std::string name;
    double dice = 0;
    double iou = 0;
    std::optional<double> hd95;
};

struct MetricSummary {
    std::size_t images = 0;
    std::size_t hd95_undefined = 0;
    double mean_dice = 0, median_dice = 0;
    double mean_iou = 0, median_iou = 0;
    double mean_hd95 = 0, median_hd95 = 0;  // over defined rows only
};

struct MetricReport {
    std::vector<MetricRow> rows;

    void add(std::string name, const SegMask& pred, const SegMask& gt);
    MetricSummary summary() const;

    /// Aligned-column table followed by aggregate rows.
    std::string to_text() const;
    /// JSON document with `rows` and `summary`; `config` is embedded verbatim when non-empty.
    std::string to_json(const std::string& config = {}) const;
};

}  // namespace lssltc
