#include "lssltc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lssltc {

Pcg32::Pcg32(std::uint64_t seed, std::uint64_t stream) : state_(0), inc_((stream << 1u) | 1u) {
    next();
    state_ += seed;
    next();
}

std::uint32_t Pcg32::next() {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
}

std::uint32_t Pcg32::bounded(std::uint32_t bound) {
    if (bound == 0) throw std::invalid_argument("Pcg32::bounded: bound must be positive");
    const std::uint32_t threshold = (-bound) % bound;
    for (;;) {
        const std::uint32_t r = next();
        if (r >= threshold) return r % bound;
    }
}

double Pcg32::uniform() {
    const std::uint64_t a = next() >> 5u;
    const std::uint64_t b = next() >> 6u;
    return static_cast<double>(a * 67108864ULL + b) / 9007199254740992.0;
}

double Pcg32::normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void SynthConfig::validate() const {
    if (size < 32) throw std::invalid_argument("synth: size must be >= 32, got " + std::to_string(size));
    if (count == 0) throw std::invalid_argument("synth: count must be positive");
    if (!(gain_min > 0.0) || gain_max < gain_min) throw std::invalid_argument("synth: bad brightness gain range");
    if (noise_sigma < 0.0 || offset_range < 0.0) throw std::invalid_argument("synth: negative noise/offset");
}

std::string SynthConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "count = " << count << '\n'
       << "size = " << size << '\n'
       << "seed = " << seed << '\n'
       << "background_frequency = " << background_frequency << '\n'
       << "wound_frequency = " << wound_frequency << '\n'
       << "noise_sigma = " << noise_sigma << '\n'
       << "gain_min = " << gain_min << '\n'
       << "gain_max = " << gain_max << '\n'
       << "offset_range = " << offset_range << '\n';
    return os.str();
}

namespace {

constexpr double kBackgroundColor[3] = {0.78, 0.58, 0.48};
constexpr double kWoundColor[3] = {0.62, 0.24, 0.20};
constexpr double kBackgroundAmplitude = 0.05;
constexpr double kWoundAmplitude = 0.08;
constexpr double kMinFraction = 0.02;
constexpr double kMaxFraction = 0.40;
constexpr int kMaxEllipseTries = 64;

struct Ellipse {
    double cx, cy, a, b, cos_t, sin_t;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * cos_t + dy * sin_t) / a;
        const double v = (-dx * sin_t + dy * cos_t) / b;
        return u * u + v * v <= 1.0;
    }
};

}  // namespace

Sample generate_sample(const SynthConfig& cfg, std::size_t index) {
    cfg.validate();
    Pcg32 rng(cfg.seed, index);
    const std::size_t s = cfg.size;
    const double sd = static_cast<double>(s);
    const double two_pi = 2.0 * std::numbers::pi;

    const double bg_theta = rng.uniform(0.0, std::numbers::pi);
    const double bg_phase = rng.uniform(0.0, two_pi);
    const double w_theta = rng.uniform(0.0, std::numbers::pi);
    const double w_phase = rng.uniform(0.0, two_pi);

    Sample out{Image(3, s, s), Image(1, s, s)};
    bool placed = false;
    for (int attempt = 0; attempt < kMaxEllipseTries && !placed; ++attempt) {
        const double rot = rng.uniform(0.0, std::numbers::pi);
        Ellipse e{rng.uniform(0.3 * sd, 0.7 * sd), rng.uniform(0.3 * sd, 0.7 * sd), rng.uniform(0.12 * sd, 0.28 * sd),
                  rng.uniform(0.12 * sd, 0.28 * sd), std::cos(rot), std::sin(rot)};
        if (!(e.a >= 1.0) || !(e.b >= 1.0)) continue;
        std::size_t inside = 0;
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) {
                const bool in = e.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
                out.mask.at(0, y, x) = in ? 1.0f : 0.0f;
                inside += in ? 1 : 0;
            }
        const double frac = static_cast<double>(inside) / (sd * sd);
        placed = frac >= kMinFraction && frac <= kMaxFraction;
    }
    if (!placed) throw std::runtime_error("synth: could not place a wound region for sample " + std::to_string(index));

    const double gain = rng.uniform(cfg.gain_min, cfg.gain_max);
    const double offset = rng.uniform(-cfg.offset_range, cfg.offset_range);
    const double bcos = std::cos(bg_theta), bsin = std::sin(bg_theta);
    const double wcos = std::cos(w_theta), wsin = std::sin(w_theta);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < s; ++y) {
            for (std::size_t x = 0; x < s; ++x) {
                const double px = static_cast<double>(x), py = static_cast<double>(y);
                double v;
                if (out.mask.at(0, y, x) > 0.5f) {
                    v = kWoundColor[c] +
                        kWoundAmplitude * std::sin(two_pi * cfg.wound_frequency * (px * wcos + py * wsin) + w_phase);
                } else {
                    v = kBackgroundColor[c] + kBackgroundAmplitude *
                                                  std::sin(two_pi * cfg.background_frequency * (px * bcos + py * bsin) +
                                                           bg_phase);
                }
                v += cfg.noise_sigma * rng.normal();
                v = gain * v + offset;
                out.image.at(c, y, x) = static_cast<float>(quantize(v)) / 255.0f;
            }
        }
    }
    return out;
}

std::vector<Sample> generate_synthetic(const SynthConfig& cfg, unsigned threads) {
    cfg.validate();
    std::vector<Sample> samples(cfg.count);
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, cfg.count);
    auto work = [&](std::size_t first) {
        for (std::size_t i = first; i < cfg.count; i += workers) samples[i] = generate_sample(cfg, i);
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work, t);
    }
    return samples;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples, const SynthConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    char name[32];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(name, sizeof name, "img_%05zu.ppm", i);
        write_image(dir / name, samples[i].image);
        std::snprintf(name, sizeof name, "msk_%05zu.pgm", i);
        write_image(dir / name, samples[i].mask);
    }
    const std::string manifest = cfg.to_text();
    write_file(dir / "manifest", std::span(reinterpret_cast<const std::uint8_t*>(manifest.data()), manifest.size()));
}

std::vector<Sample> read_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
    std::vector<std::filesystem::path> images;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.starts_with("img_") && entry.path().extension() == ".ppm") images.push_back(entry.path());
    }
    std::sort(images.begin(), images.end());
    std::vector<Sample> samples;
    samples.reserve(images.size());
    for (const auto& img_path : images) {
        auto stem = img_path.stem().string();
        const auto mask_path = dir / ("msk_" + stem.substr(4) + ".pgm");
        Sample s{read_image(img_path), read_image(mask_path)};
        if (s.mask.channels != 1 || s.mask.height != s.image.height || s.mask.width != s.image.width) {
            throw IoError("mask " + mask_path.string() + " does not match its image");
        }
        for (auto& v : s.mask.data) v = v >= 0.5f ? 1.0f : 0.0f;
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw IoError("no img_*.ppm files in " + dir.string());
    return samples;
}

}  // namespace lssltc
