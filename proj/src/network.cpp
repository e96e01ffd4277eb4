#include "lssltc/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lssltc/ops.hpp"

namespace lssltc {

void NetworkConfig::validate() const {
    if (encoder_channels.size() != 4) throw std::invalid_argument("network: exactly 4 encoder stages are required");
    for (auto c : encoder_channels)
        if (c == 0) throw std::invalid_argument("network: encoder widths must be positive");
    if (input_h == 0 || input_w == 0 || input_h % 16 != 0 || input_w % 16 != 0) {
        throw std::invalid_argument("network: input size " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                                    " must be a positive multiple of 16");
    }
    if (stem_channels == 0 || ltc_hidden == 0) throw std::invalid_argument("network: zero stem/hidden width");
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw std::invalid_argument("network: dt must be finite and >= 0");
    lss.validate();
}

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, stride, padding);
}

namespace {

template <typename T>
Conv<T> make_conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, Pcg32& rng) {
    const double fan_in = static_cast<double>(cin * k * k);
    const double bound = std::sqrt(6.0 / fan_in);
    std::vector<T> w(cout * cin * k * k);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    Conv<T> conv;
    conv.weight = Tensor<T>(Shape{cout, cin, k, k}, std::move(w), true);
    conv.bias = Tensor<T>(Shape{cout}, T(0), true);
    conv.stride = stride;
    conv.padding = k / 2;
    return conv;
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
    return bilinear_resize(x, x.dim(1) * 2, x.dim(2) * 2);
}

}  // namespace

template <typename T>
LssLtcNet<T>::LssLtcNet(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Pcg32 rng(cfg_.seed, 0x5eedu);
    const auto& ch = cfg_.encoder_channels;
    stem_ = make_conv<T>(3, cfg_.stem_channels, 3, 1, rng);
    std::size_t cin = 3;
    for (std::size_t s = 0; s < 4; ++s) {
        enc_[s][0] = make_conv<T>(cin, ch[s], 3, 2, rng);
        enc_[s][1] = make_conv<T>(ch[s], ch[s], 3, 1, rng);
        cin = ch[s];
    }
    lss_proj_ = make_conv<T>(3, ch[0], 3, 1, rng);
    init_head_ = make_conv<T>(ch[3], 1, 1, 1, rng);
    step_head_ = make_conv<T>(ch[3] + cfg_.ltc_hidden, 1, 1, 1, rng);
    ltc_ = LtcParams<T>::init(cfg_.ltc_hidden, ch[3] + 2, rng);
    {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.ltc_hidden));
        std::vector<T> w(ch[0] * cfg_.ltc_hidden);
        for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
        token_proj_ = Tensor<T>(Shape{ch[0], cfg_.ltc_hidden}, std::move(w), true);
    }
    // dec_[3] at H/8 ... dec_[0] at H
    dec_[3][0] = make_conv<T>(ch[3] + ch[2], ch[2], 3, 1, rng);
    dec_[3][1] = make_conv<T>(ch[2], ch[2], 3, 1, rng);
    dec_[2][0] = make_conv<T>(ch[2] + ch[1], ch[1], 3, 1, rng);
    dec_[2][1] = make_conv<T>(ch[1], ch[1], 3, 1, rng);
    dec_[1][0] = make_conv<T>(ch[1] + ch[0], ch[0], 3, 1, rng);
    dec_[1][1] = make_conv<T>(ch[0], ch[0], 3, 1, rng);
    dec_[0][0] = make_conv<T>(ch[0] + cfg_.stem_channels, ch[0], 3, 1, rng);
    dec_[0][1] = make_conv<T>(ch[0], ch[0], 3, 1, rng);
    main_head_ = make_conv<T>(ch[0], 1, 1, 1, rng);
    aux1_head_ = make_conv<T>(ch[3], 1, 1, 1, rng);
    aux2_head_ = make_conv<T>(ch[2], 1, 1, 1, rng);
}

template <typename T>
Tensor<T> LssLtcNet<T>::lss_fusion(const Tensor<T>& c1, const Tensor<T>& lss) const {
    if (c1.rank() != 3 || lss.rank() != 3 || lss.dim(0) != 3) {
        throw ShapeError("lss_fusion: expected C1 {C,H,W} and LSS {3,H,W}, got " + shape_str(c1.shape()) + " and " +
                         shape_str(lss.shape()));
    }
    Tensor<T> projected = lss_proj_(lss);
    if (projected.dim(1) != c1.dim(1) || projected.dim(2) != c1.dim(2)) {
        projected = bilinear_resize(projected, c1.dim(1), c1.dim(2));
    }
    if (projected.shape() != c1.shape()) {
        throw ShapeError("lss_fusion: projected map " + shape_str(projected.shape()) + " does not match C1 " +
                         shape_str(c1.shape()));
    }
    return add(c1, projected);
}

template <typename T>
BottleneckResult<T> LssLtcNet<T>::bottleneck_refine(const Tensor<T>& f5) const {
    BottleneckResult<T> out;
    out.initial_mask = sigmoid(init_head_(f5));
    if (cfg_.steps == 0) {
        out.token = Tensor<T>(Shape{token_proj_.dim(0)}, T(0));
        return out;
    }
    const std::size_t hb = f5.dim(1), wb = f5.dim(2);
    LtcState<T> state{Tensor<T>(Shape{cfg_.ltc_hidden}, T(0)), 0};
    Tensor<T> current = out.initial_mask;
    for (std::size_t t = 0; t < cfg_.steps; ++t) {
        const Tensor<T> x = build_bottleneck_input(f5, out.initial_mask, current);
        state = euler_step(state, x, ltc_, cfg_.dt, &out.clamp_events);
        current = sigmoid(step_head_(concat<T>({f5, broadcast_spatial(state.h, hb, wb)}, 0)));
        out.mask_trajectory.push_back(current);
    }
    out.token = refinement_token(state.h, token_proj_);
    return out;
}

template <typename T>
DecoderOutputs<T> LssLtcNet<T>::decode(const EncoderSkips<T>& skips, const Tensor<T>& f5,
                                       const Tensor<T>& token) const {
    DecoderOutputs<T> out;
    out.aux1_logits = aux1_head_(f5);
    Tensor<T> d = relu(dec_[3][0](concat<T>({upsample2(f5), skips.s3}, 0)));
    d = relu(dec_[3][1](d));
    out.aux2_logits = aux2_head_(d);
    d = relu(dec_[2][0](concat<T>({upsample2(d), skips.s2}, 0)));
    d = relu(dec_[2][1](d));
    d = relu(dec_[1][0](concat<T>({upsample2(d), skips.s1}, 0)));
    d = relu(dec_[1][1](d));
    Tensor<T> top = dec_[0][0](concat<T>({upsample2(d), skips.full}, 0));
    if (token.rank() != 1 || token.dim(0) != top.dim(0)) {
        throw ShapeError("decode: token " + shape_str(token.shape()) + " does not match top stage width " +
                         std::to_string(top.dim(0)));
    }
    top = add(top, broadcast_spatial(token, top.dim(1), top.dim(2)));
    d = relu(dec_[0][1](relu(top)));
    out.main_logits = main_head_(d);
    return out;
}

template <typename T>
ForwardOutputs<T> LssLtcNet<T>::forward(const Tensor<T>& image, const Tensor<T>& lss) const {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != cfg_.input_h || image.dim(2) != cfg_.input_w) {
        throw ShapeError("forward: image " + shape_str(image.shape()) + " does not match configured input 3x" +
                         std::to_string(cfg_.input_h) + "x" + std::to_string(cfg_.input_w));
    }
    EncoderSkips<T> skips;
    skips.full = relu(stem_(image));
    Tensor<T> c1 = relu(enc_[0][1](relu(enc_[0][0](image))));
    skips.s1 = cfg_.use_lss ? lss_fusion(c1, lss) : c1;
    skips.s2 = relu(enc_[1][1](relu(enc_[1][0](skips.s1))));
    skips.s3 = relu(enc_[2][1](relu(enc_[2][0](skips.s2))));
    const Tensor<T> f5 = relu(enc_[3][1](relu(enc_[3][0](skips.s3))));

    auto refined = bottleneck_refine(f5);
    auto decoded = decode(skips, f5, refined.token);
    ForwardOutputs<T> out;
    out.main_logits = decoded.main_logits;
    out.aux1_logits = decoded.aux1_logits;
    out.aux2_logits = decoded.aux2_logits;
    out.initial_mask = refined.initial_mask;
    out.mask_trajectory = std::move(refined.mask_trajectory);
    out.token = refined.token;
    out.clamp_events = refined.clamp_events;
    return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> LssLtcNet<T>::parameters() const {
    std::vector<std::pair<std::string, Tensor<T>>> p;
    auto conv = [&p](const std::string& name, const Conv<T>& c) {
        p.emplace_back(name + ".weight", c.weight);
        p.emplace_back(name + ".bias", c.bias);
    };
    conv("stem", stem_);
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t j = 0; j < 2; ++j) conv("enc" + std::to_string(s + 1) + "." + std::to_string(j), enc_[s][j]);
    conv("lss_proj", lss_proj_);
    conv("init_head", init_head_);
    conv("step_head", step_head_);
    p.emplace_back("ltc.w_h", ltc_.w_h);
    p.emplace_back("ltc.w_in", ltc_.w_in);
    p.emplace_back("ltc.w_tau", ltc_.w_tau);
    p.emplace_back("ltc.b", ltc_.b);
    p.emplace_back("token_proj", token_proj_);
    for (std::size_t s = 4; s-- > 0;)
        for (std::size_t j = 0; j < 2; ++j) conv("dec" + std::to_string(s) + "." + std::to_string(j), dec_[s][j]);
    conv("main_head", main_head_);
    conv("aux1_head", aux1_head_);
    conv("aux2_head", aux2_head_);
    return p;
}

template <typename T>
void LssLtcNet<T>::zero_lss_projection() {
    for (auto& v : lss_proj_.weight.data()) v = T(0);
    for (auto& v : lss_proj_.bias.data()) v = T(0);
}

template struct Conv<float>;
template struct Conv<double>;
template class LssLtcNet<float>;
template class LssLtcNet<double>;
template struct Conv<long double>;
template class LssLtcNet<long double>;

}  // namespace lssltc
