#include "lssltc/lss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include "lssltc/ops.hpp"

namespace lssltc {

void LssConfig::validate() const {
    if (patch_size == 0 || patch_size % 2 == 0) {
        throw std::invalid_argument("lss: patch size must be odd and positive, got " + std::to_string(patch_size));
    }
    if (search_radius == 0) throw std::invalid_argument("lss: search radius must be >= 1");
    if (!(epsilon > 0.0)) throw std::invalid_argument("lss: epsilon must be positive");
}

std::size_t LssConfig::neighbor_count() const {
    const std::size_t side = 2 * search_radius + 1;
    return side * side - 1;
}

template <typename T>
std::vector<T> normalize_patch(std::span<const T> patch, T epsilon) {
    std::vector<T> out(patch.begin(), patch.end());
    if (out.empty()) return out;
    T mu = T(0);
    for (T v : out) mu += v;
    mu /= static_cast<T>(out.size());
    T sq = T(0);
    for (auto& v : out) {
        v -= mu;
        sq += v * v;
    }
    const T denom = std::sqrt(sq) + epsilon;
    for (auto& v : out) v /= denom;
    return out;
}

template <typename T>
T patch_similarity(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("patch_similarity: descriptor lengths differ (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    }
    T dot = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return std::clamp(dot, T(-1), T(1));
}

template <typename T>
LssMap<T> compute_lss_map(const ImageT<T>& image, const LssConfig& cfg, unsigned threads) {
    cfg.validate();
    const std::size_t k = cfg.patch_size;
    const std::size_t h = image.height, w = image.width, c = image.channels;
    if (c == 0 || h < k || w < k) {
        throw std::invalid_argument("lss: image " + std::to_string(h) + "x" + std::to_string(w) +
                                    " smaller than patch size " + std::to_string(k));
    }
    for (T v : image.data) {
        if (!std::isfinite(v)) throw std::invalid_argument("lss: image contains non-finite values");
    }
    const auto r = static_cast<std::ptrdiff_t>(cfg.search_radius);
    const auto half = static_cast<std::ptrdiff_t>(k / 2);
    const auto ih = static_cast<std::ptrdiff_t>(h), iw = static_cast<std::ptrdiff_t>(w);
    const std::size_t dlen = k * k * c;
    const std::size_t gh = h + 2 * cfg.search_radius, gw = w + 2 * cfg.search_radius;
    const T eps = static_cast<T>(cfg.epsilon);

    // Descriptor field over every patch center within R of the image.
    std::vector<T> field(gh * gw * dlen);
    std::vector<T> patch(dlen);
    for (std::size_t gy = 0; gy < gh; ++gy) {
        const auto cy = static_cast<std::ptrdiff_t>(gy) - r;
        for (std::size_t gx = 0; gx < gw; ++gx) {
            const auto cx = static_cast<std::ptrdiff_t>(gx) - r;
            std::size_t idx = 0;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::ptrdiff_t dy = -half; dy <= half; ++dy) {
                    const auto sy = static_cast<std::size_t>(reflect_index(cy + dy, ih));
                    for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
                        const auto sx = static_cast<std::size_t>(reflect_index(cx + dx, iw));
                        patch[idx++] = image.at(ch, sy, sx);
                    }
                }
            const auto desc = normalize_patch<T>(patch, eps);
            std::copy(desc.begin(), desc.end(), field.begin() + (gy * gw + gx) * dlen);
        }
    }

    std::vector<std::ptrdiff_t> offsets;
    for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx)
            if (dy != 0 || dx != 0) offsets.push_back(dy * static_cast<std::ptrdiff_t>(gw) + dx);
    const auto n = static_cast<T>(offsets.size());

    LssMap<T> map(h, w);
    auto mean_ch = map.mean_channel();
    auto max_ch = map.max_channel();
    auto std_ch = map.std_channel();

    auto run_rows = [&](std::size_t y_begin, std::size_t y_end) {
        std::vector<T> sims(offsets.size());
        for (std::size_t y = y_begin; y < y_end; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const auto center = static_cast<std::ptrdiff_t>((y + cfg.search_radius) * gw + x + cfg.search_radius);
                std::span<const T> dc(field.data() + static_cast<std::size_t>(center) * dlen, dlen);
                T total = T(0);
                T best = T(-1);
                for (std::size_t j = 0; j < offsets.size(); ++j) {
                    std::span<const T> dn(field.data() + static_cast<std::size_t>(center + offsets[j]) * dlen, dlen);
                    const T s = patch_similarity(dc, dn);
                    sims[j] = s;
                    total += s;
                    best = std::max(best, s);
                }
                const T mu = total / n;
                T var = T(0);
                for (T s : sims) var += (s - mu) * (s - mu);
                mean_ch[y * w + x] = mu;
                max_ch[y * w + x] = best;
                std_ch[y * w + x] = std::sqrt(var / n);
            }
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(threads, 1, h);
    if (workers == 1) {
        run_rows(0, h);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (h + workers - 1) / workers;
        for (std::size_t t = 0; t < workers; ++t) {
            const std::size_t b = t * chunk, e = std::min(h, b + chunk);
            if (b < e) pool.emplace_back(run_rows, b, e);
        }
    }
    return map;
}

template <typename T>
std::vector<std::uint8_t> channel_to_gray(std::span<const T> channel) {
    std::vector<std::uint8_t> out(channel.size(), 0);
    if (channel.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(channel.begin(), channel.end());
    const double lo = static_cast<double>(*lo_it), hi = static_cast<double>(*hi_it);
    if (!(hi > lo)) return out;
    for (std::size_t i = 0; i < channel.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (static_cast<double>(channel[i]) - lo) / (hi - lo)));
    }
    return out;
}

template <typename T>
void export_explainability(const LssMap<T>& map, const std::filesystem::path& out_dir, std::string_view comment) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    const std::pair<const char*, std::span<const T>> channels[] = {
        {"lss_mean.pgm", map.mean_channel()},
        {"lss_max.pgm", map.max_channel()},
        {"lss_std.pgm", map.std_channel()},
    };
    for (const auto& [name, channel] : channels) {
        const auto levels = channel_to_gray(channel);
        Image img(1, map.height, map.width);
        for (std::size_t i = 0; i < levels.size(); ++i) img.data[i] = static_cast<float>(levels[i]) / 255.0f;
        write_image(out_dir / name, img, comment);
    }
}

#define LSSLTC_INSTANTIATE_LSS(T)                                                                  \
    template std::vector<T> normalize_patch(std::span<const T>, T);                                \
    template T patch_similarity(std::span<const T>, std::span<const T>);                           \
    template LssMap<T> compute_lss_map(const ImageT<T>&, const LssConfig&, unsigned);              \
    template std::vector<std::uint8_t> channel_to_gray(std::span<const T>);                        \
    template void export_explainability(const LssMap<T>&, const std::filesystem::path&, std::string_view);

LSSLTC_INSTANTIATE_LSS(float)
LSSLTC_INSTANTIATE_LSS(double)

#undef LSSLTC_INSTANTIATE_LSS

}  // namespace lssltc
