#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lssltc/image.hpp"
#include "lssltc/lss.hpp"
#include "lssltc/synth.hpp"

namespace testing_support {

using lssltc::ImageT;
using lssltc::LssConfig;
using lssltc::LssMap;

inline ImageT<double> random_image(lssltc::Pcg32& rng, std::size_t c, std::size_t h, std::size_t w) {
    ImageT<double> img(c, h, w);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

inline std::size_t mirror(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * (n - 1);
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < n ? m : period - m);
}

/// Direct per-pixel evaluation: every patch is re-extracted and re-normalized
/// for every neighbor, with no shared descriptor field.
inline LssMap<double> lss_oracle(const ImageT<double>& img, const LssConfig& cfg) {
    const auto k = static_cast<std::ptrdiff_t>(cfg.patch_size), half = k / 2;
    const auto r = static_cast<std::ptrdiff_t>(cfg.search_radius);
    const auto h = static_cast<std::ptrdiff_t>(img.height), w = static_cast<std::ptrdiff_t>(img.width);
    auto descriptor = [&](std::ptrdiff_t cy, std::ptrdiff_t cx) {
        std::vector<double> p;
        for (std::size_t c = 0; c < img.channels; ++c)
            for (std::ptrdiff_t dy = -half; dy <= half; ++dy)
                for (std::ptrdiff_t dx = -half; dx <= half; ++dx)
                    p.push_back(img.at(c, mirror(cy + dy, h), mirror(cx + dx, w)));
        double mean = 0;
        for (double v : p) mean += v;
        mean /= static_cast<double>(p.size());
        double norm = 0;
        for (double& v : p) {
            v -= mean;
            norm += v * v;
        }
        norm = std::sqrt(norm) + cfg.epsilon;
        for (double& v : p) v /= norm;
        return p;
    };
    LssMap<double> map(img.height, img.width);
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            const auto center = descriptor(y, x);
            std::vector<double> sims;
            for (std::ptrdiff_t u = -r; u <= r; ++u) {
                for (std::ptrdiff_t v = -r; v <= r; ++v) {
                    if (u == 0 && v == 0) continue;
                    const auto other = descriptor(y + u, x + v);
                    double dot = 0;
                    for (std::size_t i = 0; i < center.size(); ++i) dot += center[i] * other[i];
                    sims.push_back(std::max(-1.0, std::min(1.0, dot)));
                }
            }
            double mean = 0, best = -1;
            for (double s : sims) {
                mean += s;
                best = std::max(best, s);
            }
            mean /= static_cast<double>(sims.size());
            double var = 0;
            for (double s : sims) var += (s - mean) * (s - mean);
            const std::size_t idx = static_cast<std::size_t>(y * w + x);
            map.mean_channel()[idx] = mean;
            map.max_channel()[idx] = best;
            map.std_channel()[idx] = std::sqrt(var / static_cast<double>(sims.size()));
        }
    }
    return map;
}

template <typename A, typename B>
double max_abs_diff(const std::vector<A>& a, const std::vector<B>& b) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

/// A fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lssltc_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing_support
