#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "lssltc/lssf.hpp"
#include "lssltc/synth.hpp"

using namespace lssltc;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Netpbm, WhitePixel) {
    auto b = bytes_of("P5\n1 1\n255\n");
    b.push_back(255);
    const auto img = decode_netpbm(b);
    EXPECT_EQ(img.channels, 1u);
    EXPECT_EQ(img.data.at(0), 1.0f);
}

TEST(Netpbm, HeaderCommentsAndWhitespace) {
    auto b = bytes_of("P5 # comment\n# another\n2\t1 255 ");
    b.push_back(0);
    b.push_back(51);
    const auto img = decode_netpbm(b);
    EXPECT_EQ(img.width, 2u);
    EXPECT_FLOAT_EQ(img.data[1], 0.2f);
}

TEST(Netpbm, RandomColorRoundTripIsByteExact) {
    Pcg32 rng(5, 5);
    auto b = bytes_of("P6\n8 8\n255\n");
    for (int i = 0; i < 8 * 8 * 3; ++i) b.push_back(static_cast<std::uint8_t>(rng.bounded(256)));
    const auto img = decode_netpbm(b);
    EXPECT_EQ(img.channels, 3u);
    EXPECT_EQ(encode_netpbm(img), b);

    const auto dir = testing_support::scratch_dir("netpbm");
    write_image(dir / "x.ppm", img);
    EXPECT_EQ(read_image(dir / "x.ppm").data, img.data);
    EXPECT_EQ(read_file(dir / "x.ppm"), b);
}

TEST(Netpbm, TruncatedRasterReportsOffset) {
    auto b = bytes_of("P6\n4 4\n255\n");
    const std::size_t header = b.size();
    b.resize(header + 20, 7);
    try {
        decode_netpbm(b);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), header + 20);
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    }
}

TEST(Netpbm, RejectsBadHeaders) {
    auto with_raster = [](std::string h, std::size_t n) {
        auto b = bytes_of(h);
        b.resize(b.size() + n, 0);
        return b;
    };
    try {
        decode_netpbm(with_raster("P5\n2 2\n65535\n", 8));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 7u);
        EXPECT_NE(std::string(e.what()).find("maxval"), std::string::npos);
    }
    EXPECT_THROW(decode_netpbm(with_raster("P3\n2 2\n255\n", 4)), ParseError);
    EXPECT_THROW(decode_netpbm(with_raster("P5\n2\n", 4)), ParseError);
    EXPECT_THROW(decode_netpbm(with_raster("P5\n0 2\n255\n", 0)), ParseError);
    EXPECT_THROW(decode_netpbm(with_raster("P5\n2 2\n255\n", 5)), ParseError);
    EXPECT_THROW(read_image("/nonexistent/dir/file.pgm"), IoError);
}

TEST(Netpbm, QuantizeRoundsAndClamps) {
    EXPECT_EQ(quantize(-0.3), 0);
    EXPECT_EQ(quantize(2.0), 255);
    EXPECT_EQ(quantize(0.5), 128);
    for (int v = 0; v < 256; ++v) EXPECT_EQ(quantize(static_cast<float>(v) / 255.0f), v);
}

TEST(Lssf, RoundTripAndLayout) {
    ImageT<float> planes(3, 2, 5);
    Pcg32 rng(1, 2);
    for (auto& v : planes.data) v = static_cast<float>(rng.uniform(-1, 1));
    const auto bytes = encode_lssf(planes);
    ASSERT_EQ(bytes.size(), 14u + 4u * 30u);
    EXPECT_EQ(std::memcmp(bytes.data(), "LSSF", 4), 0);
    EXPECT_EQ(bytes[4], kLssfVersion);
    EXPECT_EQ(bytes[5], 3);
    EXPECT_EQ(bytes[6], 2);
    EXPECT_EQ(bytes[7], 0);
    EXPECT_EQ(bytes[10], 5);
    float first;
    std::memcpy(&first, bytes.data() + 14, 4);
    EXPECT_EQ(first, planes.data[0]);

    const auto back = decode_lssf(bytes);
    EXPECT_EQ(back.channels, 3u);
    EXPECT_EQ(back.height, 2u);
    EXPECT_EQ(back.width, 5u);
    EXPECT_EQ(back.data, planes.data);

    const auto dir = testing_support::scratch_dir("lssf");
    write_lssf(dir / "m.lssf", planes);
    EXPECT_EQ(read_lssf(dir / "m.lssf").data, planes.data);
}

TEST(Lssf, RejectsMalformedFiles) {
    const auto good = encode_lssf(ImageT<float>(1, 2, 2, 0.5f));
    auto b = good;
    b[0] = 'X';
    EXPECT_THROW(decode_lssf(b), ParseError);
    b = good;
    b[4] = 9;
    EXPECT_THROW(decode_lssf(b), ParseError);
    b = good;
    b.pop_back();
    EXPECT_THROW(decode_lssf(b), ParseError);
    b = good;
    b.push_back(0);
    EXPECT_THROW(decode_lssf(b), ParseError);
    EXPECT_THROW(decode_lssf(std::vector<std::uint8_t>(good.begin(), good.begin() + 9)), ParseError);
}

TEST(Pcg32Test, KnownSequenceAndBounds) {
    Pcg32 a(42, 54), b(42, 54), c(42, 55);
    EXPECT_EQ(a.next(), 0xa15c02b7u);
    EXPECT_EQ(a.next(), 0x7b47f409u);
    EXPECT_NE(b.next(), c.next());
    for (int i = 0; i < 1000; ++i) {
        EXPECT_LT(a.bounded(7), 7u);
        const double u = a.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Synth, DeterministicAndIndependentPerSample) {
    SynthConfig cfg;
    cfg.count = 4;
    cfg.size = 32;
    cfg.seed = 17;
    const auto a = generate_synthetic(cfg), b = generate_synthetic(cfg, 3);
    ASSERT_EQ(a.size(), 4u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].image.data, b[i].image.data);
        EXPECT_EQ(a[i].mask.data, b[i].mask.data);
    }
    const auto third = generate_sample(cfg, 2);
    EXPECT_EQ(third.image.data, a[2].image.data);
    cfg.seed = 18;
    EXPECT_NE(generate_sample(cfg, 2).image.data, a[2].image.data);
}

TEST(Synth, ForegroundFractionWithinBounds) {
    SynthConfig cfg;
    cfg.count = 40;
    cfg.size = 64;
    cfg.seed = 3;
    for (const auto& s : generate_synthetic(cfg)) {
        double fg = 0;
        for (float v : s.mask.data) {
            ASSERT_TRUE(v == 0.0f || v == 1.0f);
            fg += v;
        }
        const double frac = fg / static_cast<double>(s.mask.data.size());
        EXPECT_GE(frac, 0.02);
        EXPECT_LE(frac, 0.40);
    }
}

TEST(Synth, LssStdIsHigherOnBoundaryBand) {
    SynthConfig cfg;
    cfg.count = 3;
    cfg.size = 48;
    cfg.seed = 9;
    for (const auto& s : generate_synthetic(cfg)) {
        const auto map = testing_support::lss_oracle(s.image.cast<double>(), LssConfig{3, 3, 1e-8});
        const auto mask = s.mask;
        const long n = static_cast<long>(cfg.size);
        auto fg = [&](long y, long x) { return mask.data[static_cast<std::size_t>(y * n + x)] > 0.5f; };
        double band = 0, interior = 0;
        std::size_t nb = 0, ni = 0;
        for (long y = 0; y < n; ++y)
            for (long x = 0; x < n; ++x) {
                bool near_edge = false, near_fg = false;
                for (long dy = -4; dy <= 4; ++dy)
                    for (long dx = -4; dx <= 4; ++dx) {
                        const long yy = std::clamp(y + dy, 0L, n - 1), xx = std::clamp(x + dx, 0L, n - 1);
                        if (fg(yy, xx) != fg(y, x) && std::abs(dy) <= 1 && std::abs(dx) <= 1) near_edge = true;
                        if (fg(yy, xx)) near_fg = true;
                    }
                const double v = map.std_channel()[static_cast<std::size_t>(y * n + x)];
                if (near_edge) {
                    band += v;
                    ++nb;
                } else if (!near_fg) {
                    interior += v;
                    ++ni;
                }
            }
        ASSERT_GT(nb, 0u);
        ASSERT_GT(ni, 0u);
        EXPECT_GT(band / nb, interior / ni);
    }
}

TEST(Synth, DatasetDirectoryRoundTrip) {
    SynthConfig cfg;
    cfg.count = 3;
    cfg.size = 32;
    const auto samples = generate_synthetic(cfg);
    const auto dir = testing_support::scratch_dir("dataset");
    write_dataset(dir, samples, cfg);
    EXPECT_TRUE(std::filesystem::exists(dir / "img_00000.ppm"));
    EXPECT_TRUE(std::filesystem::exists(dir / "msk_00002.pgm"));
    EXPECT_TRUE(std::filesystem::exists(dir / "manifest"));
    const auto back = read_dataset(dir);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].image.data, samples[i].image.data);
        EXPECT_EQ(back[i].mask.data, samples[i].mask.data);
    }
    EXPECT_THROW(read_dataset(dir / "missing"), IoError);
}

TEST(Synth, ConfigValidation) {
    SynthConfig cfg;
    cfg.size = 16;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.size = 32;
    cfg.gain_min = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
