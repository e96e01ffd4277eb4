#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "lssltc/ops.hpp"
#include "lssltc/train.hpp"

using namespace lssltc;

namespace {

NetworkConfig small_config(std::size_t size = 32) {
    NetworkConfig cfg;
    cfg.input_h = cfg.input_w = size;
    cfg.encoder_channels = {4, 6, 8, 8};
    cfg.stem_channels = 4;
    cfg.ltc_hidden = 6;
    cfg.lss = LssConfig{3, 2, 1e-8};
    cfg.seed = 5;
    return cfg;
}

template <typename T>
Tensor<T> random_tensor(Pcg32& rng, Shape s, double lo, double hi) {
    Tensor<T> t(std::move(s));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
bool same(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

std::vector<Sample> tiny_dataset(std::size_t count, std::uint64_t seed) {
    SynthConfig s;
    s.count = count;
    s.size = 32;
    s.seed = seed;
    return generate_synthetic(s);
}

class NetworkTest : public ::testing::Test {
protected:
    void TearDown() override {
        Tape<double>::active().reset();
        Tape<float>::active().reset();
    }
};

}  // namespace

TEST_F(NetworkTest, OutputShapes) {
    for (std::size_t size : {32u, 48u}) {
        auto cfg = small_config(size);
        LssLtcNet<double> net(cfg);
        Pcg32 rng(1, 1);
        const auto out = net.forward(random_tensor<double>(rng, {3, size, size}, 0, 1),
                                     random_tensor<double>(rng, {3, size, size}, -1, 1));
        EXPECT_EQ(out.main_logits.shape(), (Shape{1, size, size}));
        EXPECT_EQ(out.aux1_logits.shape(), (Shape{1, size / 16, size / 16}));
        EXPECT_EQ(out.aux2_logits.shape(), (Shape{1, size / 8, size / 8}));
        EXPECT_EQ(out.token.numel(), cfg.encoder_channels[0]);
    }
    auto bad = small_config(40);
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST_F(NetworkTest, MaskTrajectoryHasStepsEntriesInUnitRange) {
    auto cfg = small_config();
    cfg.steps = 4;
    LssLtcNet<double> net(cfg);
    Pcg32 rng(2, 1);
    const auto out = net.forward(random_tensor<double>(rng, {3, 32, 32}, 0, 1), random_tensor<double>(rng, {3, 32, 32}, -1, 1));
    ASSERT_EQ(out.mask_trajectory.size(), 4u);
    for (const auto& m : out.mask_trajectory) {
        EXPECT_EQ(m.shape(), (Shape{1, 2, 2}));
        for (double v : m.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST_F(NetworkTest, ZeroProjectionMatchesLssFreeNetwork) {
    auto cfg = small_config();
    LssLtcNet<double> fused(cfg);
    fused.zero_lss_projection();
    cfg.use_lss = false;
    const LssLtcNet<double> plain(cfg);
    Pcg32 rng(3, 3);
    const auto image = random_tensor<double>(rng, {3, 32, 32}, 0, 1);
    const auto lss = random_tensor<double>(rng, {3, 32, 32}, -1, 1);
    const auto a = fused.forward(image, lss), b = plain.forward(image, lss);
    EXPECT_TRUE(same(a.main_logits, b.main_logits));
    EXPECT_TRUE(same(a.aux1_logits, b.aux1_logits));
    EXPECT_TRUE(same(a.aux2_logits, b.aux2_logits));
}

TEST_F(NetworkTest, FusionIsAdditive) {
    LssLtcNet<double> net(small_config());
    Pcg32 rng(4, 4);
    const auto lss = random_tensor<double>(rng, {3, 32, 32}, -1, 1);
    const auto c1 = random_tensor<double>(rng, {4, 16, 16}, -1, 1);
    const auto f_lss = net.lss_fusion(Tensor<double>(Shape{4, 16, 16}), lss);
    const auto f1 = net.lss_fusion(c1, lss);
    for (std::size_t i = 0; i < f1.numel(); ++i) EXPECT_NEAR(f1.data()[i] - c1.data()[i], f_lss.data()[i], 1e-12);
    net.zero_lss_projection();
    EXPECT_TRUE(same(net.lss_fusion(c1, lss), c1));
}

TEST_F(NetworkTest, TokenProjectionControlsDecoderBias) {
    LssLtcNet<double> net(small_config());
    Pcg32 rng(5, 5);
    const auto image = random_tensor<double>(rng, {3, 32, 32}, 0, 1);
    const auto lss = random_tensor<double>(rng, {3, 32, 32}, -1, 1);
    const auto base = net.forward(image, lss);

    auto& proj = net.token_projection();
    const auto saved = proj.clone();
    for (auto& v : proj.data()) v = 0.0;
    const auto zeroed = net.forward(image, lss);
    for (double v : zeroed.token.data()) EXPECT_EQ(v, 0.0);

    auto cfg_off = small_config();
    cfg_off.steps = 0;
    const LssLtcNet<double> off(cfg_off);
    EXPECT_TRUE(same(zeroed.main_logits, off.forward(image, lss).main_logits));

    std::copy(saved.data().begin(), saved.data().end(), proj.data().begin());
    for (auto& v : proj.data()) v *= 1.5;
    const auto bumped = net.forward(image, lss);
    double diff = 0;
    for (std::size_t i = 0; i < base.main_logits.numel(); ++i)
        diff = std::max(diff, std::abs(bumped.main_logits.data()[i] - base.main_logits.data()[i]));
    EXPECT_GT(diff, 1e-9);
}

TEST_F(NetworkTest, ZeroLtcGivesSameTokenForAnyStepCount) {
    auto make = [](std::size_t steps) {
        auto cfg = small_config();
        cfg.steps = steps;
        cfg.dt = 1.0;
        LssLtcNet<double> net(cfg);
        auto& p = net.ltc();
        for (auto* t : {&p.w_h, &p.w_in, &p.w_tau, &p.b})
            for (auto& v : t->data()) v = 0.0;
        return net;
    };
    const auto one = make(1), four = make(4);
    Pcg32 rng(6, 6);
    const auto image = random_tensor<double>(rng, {3, 32, 32}, 0, 1);
    const auto lss = random_tensor<double>(rng, {3, 32, 32}, -1, 1);
    const auto a = one.forward(image, lss), b = four.forward(image, lss);
    EXPECT_TRUE(same(a.token, b.token));
    for (double v : a.token.data()) EXPECT_EQ(v, 0.0);
    EXPECT_TRUE(same(a.main_logits, b.main_logits));
}

TEST_F(NetworkTest, ForwardIsDeterministic) {
    const LssLtcNet<float> a(small_config()), b(small_config());
    Pcg32 rng(7, 7);
    const auto image = random_tensor<float>(rng, {3, 32, 32}, 0, 1);
    const auto lss = random_tensor<float>(rng, {3, 32, 32}, -1, 1);
    EXPECT_TRUE(same(a.forward(image, lss).main_logits, b.forward(image, lss).main_logits));
    const auto pa = a.parameters(), pb = b.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i].first, pb[i].first);
        EXPECT_TRUE(same(pa[i].second, pb[i].second)) << pa[i].first;
    }
}

TEST_F(NetworkTest, ZeroLearningRateKeepsParameters) {
    LssLtcNet<float> net(small_config());
    std::vector<Tensor<float>> before;
    for (const auto& [name, t] : net.parameters()) before.push_back(t.clone());
    const auto data = prepare_samples<float>(tiny_dataset(4, 3), net.config().lss);
    TrainConfig tc;
    tc.epochs = 1;
    tc.lr = 0.0;
    const auto log = train(net, data, tc);
    ASSERT_EQ(log.size(), 1u);
    const auto after = net.parameters();
    for (std::size_t i = 0; i < after.size(); ++i) EXPECT_TRUE(same(before[i], after[i].second)) << after[i].first;
}

TEST_F(NetworkTest, SingleSampleOverfit) {
    const NetworkConfig cfg;
    LssLtcNet<float> net(cfg);
    SynthConfig s;
    s.count = 1;
    s.size = cfg.input_h;
    s.seed = 21;
    const auto data = prepare_samples<float>(generate_synthetic(s), cfg.lss);
    TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 1;
    train(net, data, tc);
    EXPECT_GE(evaluate(net, data).summary().mean_dice, 0.99);
}

TEST_F(NetworkTest, LossDecreasesOverTenEpochs) {
    LssLtcNet<float> net(small_config());
    const auto data = prepare_samples<float>(tiny_dataset(16, 4), net.config().lss);
    TrainConfig tc;
    tc.epochs = 10;
    const auto log = train(net, data, tc);
    ASSERT_EQ(log.size(), 10u);
    EXPECT_LT(log[9].mean.total, log[0].mean.total);
    EXPECT_NE(log[0].to_line().find("epoch=1 "), std::string::npos);
}

TEST_F(NetworkTest, TrainingIsReproducible) {
    const auto data = prepare_samples<float>(tiny_dataset(6, 8), small_config().lss);
    auto run = [&] {
        LssLtcNet<float> net(small_config());
        TrainConfig tc;
        tc.epochs = 2;
        std::string trace;
        for (const auto& e : train(net, data, tc)) trace += e.to_line() + "\n";
        return trace;
    };
    EXPECT_EQ(run(), run());
}

TEST_F(NetworkTest, TrainingAbortsOnNonFiniteLoss) {
    LssLtcNet<float> net(small_config());
    auto data = prepare_samples<float>(tiny_dataset(2, 2), net.config().lss);
    data[1].image.data()[7] = std::numeric_limits<float>::infinity();
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 1;
    try {
        train(net, data, tc);
        FAIL() << "expected runtime_error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    }
}

TEST_F(NetworkTest, CheckpointRoundTrip) {
    const auto dir = testing_support::scratch_dir("ckpt");
    LssLtcNet<float> net(small_config());
    Pcg32 rng(9, 9);
    for (auto& [name, t] : net.parameters())
        for (auto& v : t.data()) v += static_cast<float>(rng.uniform(-0.01, 0.01));
    save_checkpoint(dir / "a.ckpt", net, "lr = 0.001");
    const auto ck = read_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(ck.config_echo, "lr = 0.001");
    EXPECT_EQ(ck.network.encoder_channels, net.config().encoder_channels);
    const auto loaded = load_network<float>(ck);
    const auto pa = net.parameters(), pb = loaded.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(same(pa[i].second, pb[i].second)) << pa[i].first;

    auto bytes = read_file(dir / "a.ckpt");
    bytes.resize(bytes.size() - 3);
    write_file(dir / "b.ckpt", bytes);
    EXPECT_THROW(read_checkpoint(dir / "b.ckpt"), ParseError);
    bytes[0] = 'X';
    write_file(dir / "c.ckpt", bytes);
    EXPECT_THROW(read_checkpoint(dir / "c.ckpt"), ParseError);
}

TEST_F(NetworkTest, PredictionContract) {
    const LssLtcNet<float> net(small_config());
    const auto sample = tiny_dataset(1, 5)[0];
    const auto a = predict(net, sample.image), b = predict(net, sample.image);
    EXPECT_EQ(a.mask.bits, b.mask.bits);
    EXPECT_EQ(a.mask.height, 32u);
    EXPECT_EQ(a.mask.width, 32u);
    for (std::size_t i = 0; i < a.mask.bits.size(); ++i)
        EXPECT_EQ(a.mask.bits[i], a.probability.data[i] >= 0.5f ? 1 : 0);
    EXPECT_THROW(predict(net, Image(3, 16, 16)), std::invalid_argument);

    Image p(1, 1, 2);
    p.data = {0.5001f, 0.4999f};
    const auto m = SegMask::from_image(p, 0.5f);
    EXPECT_EQ(m.bits[0], 1);
    EXPECT_EQ(m.bits[1], 0);
}
