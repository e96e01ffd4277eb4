#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lssltc/image.hpp"

namespace lssltc {

/// PCG32 (XSH-RR, 64-bit state) with the reference seeding procedure.
class Pcg32 {
public:
    using result_type = std::uint32_t;

    Pcg32(std::uint64_t seed, std::uint64_t stream);

    std::uint32_t next();
    /// Unbiased integer in [0, bound).
    std::uint32_t bounded(std::uint32_t bound);
    /// 53-bit uniform double in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller (one value per call, two uniforms consumed).
    double normal();

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xffffffffu; }
    result_type operator()() { return next(); }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
};

/// Deterministic Fisher-Yates shuffle driven by Pcg32::bounded.
template <typename Vec>
void pcg_shuffle(Vec& items, Pcg32& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.bounded(static_cast<std::uint32_t>(i));
        std::swap(items[i - 1], items[j]);
    }
}

struct SynthConfig {
    std::size_t count = 16;
    std::size_t size = 64;
    std::uint64_t seed = 1;
    double background_frequency = 0.05;  // cycles per pixel
    double wound_frequency = 0.22;
    double noise_sigma = 0.02;
    double gain_min = 0.8;  // per-image brightness a*v + b
    double gain_max = 1.2;
    double offset_range = 0.05;  // b in [-offset_range, offset_range]

    void validate() const;
    /// key = value lines, also used as the dataset manifest.
    std::string to_text() const;
};

struct Sample {
    Image image;  // 3 x S x S, 8-bit levels
    Image mask;   // 1 x S x S, values {0, 1}
};

/// Sample `index` drawn from Pcg32(seed, index). Independent of other samples.
Sample generate_sample(const SynthConfig& cfg, std::size_t index);
std::vector<Sample> generate_synthetic(const SynthConfig& cfg, unsigned threads = 1);

/// img_%05d.ppm, msk_%05d.pgm and a `manifest` echoing the config.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples, const SynthConfig& cfg);
/// Loads every img_*.ppm with its matching msk_*.pgm, sorted by name. Masks are thresholded at 0.5.
std::vector<Sample> read_dataset(const std::filesystem::path& dir);

}  // namespace lssltc
