#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lssltc/lss.hpp"
#include "lssltc/ltc.hpp"
#include "lssltc/tensor.hpp"

namespace lssltc {

/// Desk-scale encoder/decoder configuration. Four encoder stages each halve
/// the resolution, so the input sides must be divisible by 16.
struct NetworkConfig {
    std::size_t input_h = 64;
    std::size_t input_w = 64;
    std::vector<std::size_t> encoder_channels{16, 32, 64, 128};
    std::size_t stem_channels = 8;
    std::size_t ltc_hidden = 64;
    std::size_t steps = 4;  // 0 switches the refinement loop off (zero token)
    double dt = 0.5;
    bool use_lss = true;
    LssConfig lss;
    std::uint64_t seed = 7;

    void validate() const;
};

template <typename T>
struct Conv {
    Tensor<T> weight;  // {Cout, Cin, k, k}
    Tensor<T> bias;    // {Cout}
    std::size_t stride = 1;
    std::size_t padding = 0;

    Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct ForwardOutputs {
    Tensor<T> main_logits;  // {1, H, W}
    Tensor<T> aux1_logits;  // {1, H/16, W/16}
    Tensor<T> aux2_logits;  // {1, H/8, W/8}
    Tensor<T> initial_mask;
    std::vector<Tensor<T>> mask_trajectory;  // `steps` bottleneck masks
    Tensor<T> token;
    std::size_t clamp_events = 0;
};

template <typename T>
struct BottleneckResult {
    Tensor<T> token;
    Tensor<T> initial_mask;
    std::vector<Tensor<T>> mask_trajectory;
    std::size_t clamp_events = 0;
};

template <typename T>
struct EncoderSkips {
    Tensor<T> full;  // stem, H
    Tensor<T> s1;    // F1 (fused), H/2
    Tensor<T> s2;    // H/4
    Tensor<T> s3;    // H/8
};

template <typename T>
struct DecoderOutputs {
    Tensor<T> main_logits, aux1_logits, aux2_logits;
};

template <typename T>
class LssLtcNet {
public:
    explicit LssLtcNet(NetworkConfig cfg);

    const NetworkConfig& config() const { return cfg_; }

    /// image {3,H,W}; lss {3,H,W} constant map (ignored when use_lss is off).
    ForwardOutputs<T> forward(const Tensor<T>& image, const Tensor<T>& lss) const;

    /// C1 + resize(conv3x3(lss)); the projection runs at the map's native
    /// resolution and is resized to C1's spatial size afterwards.
    Tensor<T> lss_fusion(const Tensor<T>& c1, const Tensor<T>& lss) const;

    /// Initial coarse mask from F5, then `steps` Euler updates of the LTC state
    /// with the current-mask GAP refreshed each step.
    BottleneckResult<T> bottleneck_refine(const Tensor<T>& f5) const;

    /// U-Net decoder. The token is added as a spatially constant bias at the
    /// full-resolution stage only.
    DecoderOutputs<T> decode(const EncoderSkips<T>& skips, const Tensor<T>& f5, const Tensor<T>& token) const;

    /// Named handles onto every learned tensor, in a stable order.
    std::vector<std::pair<std::string, Tensor<T>>> parameters() const;

    /// Zeroes the LSS projection so fusion is the identity.
    void zero_lss_projection();

    Conv<T>& lss_projection() { return lss_proj_; }
    Tensor<T>& token_projection() { return token_proj_; }
    LtcParams<T>& ltc() { return ltc_; }

private:
    NetworkConfig cfg_;
    Conv<T> stem_;
    Conv<T> enc_[4][2];
    Conv<T> lss_proj_;
    Conv<T> init_head_;
    Conv<T> step_head_;
    LtcParams<T> ltc_;
    Tensor<T> token_proj_;  // {top decoder width, hidden}
    Conv<T> dec_[4][2];     // index 0 = full resolution ... 3 = H/8
    Conv<T> main_head_;
    Conv<T> aux1_head_;
    Conv<T> aux2_head_;
};

}  // namespace lssltc
