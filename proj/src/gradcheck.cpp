#include "lssltc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <type_traits>

#include "lssltc/losses.hpp"
#include "lssltc/lss.hpp"
#include "lssltc/ltc.hpp"
#include "lssltc/network.hpp"
#include "lssltc/ops.hpp"
#include "lssltc/synth.hpp"

namespace lssltc {

bool GradCheckReport::passed() const {
    return !cases.empty() && std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; });
}

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& c : cases) m = std::max(m, c.max_rel_error);
    return m;
}

std::size_t GradCheckReport::coordinates() const {
    std::size_t n = 0;
    for (const auto& c : cases) n += c.coordinates;
    return n;
}

std::string GradCheckReport::to_text() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "gradcheck bits=%d h=%g tol=%g\n", bits, step, tolerance);
    os << buf;
    for (const auto& c : cases) {
        std::snprintf(buf, sizeof buf, "  %-24s coords=%-4zu max_rel_err=%.3e native_fd_err=%.3e %s\n",
                      c.name.c_str(), c.coordinates, c.max_rel_error, c.native_rel_error, c.passed ? "ok" : "FAIL");
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "%s max_rel_err=%.3e coords=%zu cases=%zu\n", passed() ? "PASS" : "FAIL",
                  max_rel_error(), coordinates(), cases.size());
    os << buf;
    return os.str();
}

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

namespace {

constexpr std::size_t kCoordsPerCase = 100;

struct Spec {
    Shape shape;
    std::vector<double> values;
};

template <typename U>
std::vector<Tensor<U>> materialize(const std::vector<Spec>& specs, bool grad) {
    std::vector<Tensor<U>> out;
    for (const auto& s : specs) out.emplace_back(s.shape, std::vector<U>(s.values.begin(), s.values.end()), grad);
    return out;
}

/// Reduces a tensor to a scalar with fixed weights so that every output
/// element carries a distinct adjoint.
template <typename U>
Tensor<U> contract(const Tensor<U>& y) {
    std::vector<U> w(y.numel());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<U>(std::sin(1.37 * static_cast<double>(i) + 0.4));
    return sum(mul(y, Tensor<U>(y.shape(), std::move(w))));
}

// Analytic gradients come from T. The central-difference reference is
// evaluated in the wider type R on the same values, so that its rounding
// noise stays far below the tolerance; the native-precision difference is
// reported alongside for comparison.
template <typename T, typename R>
class Suite {
public:
    Suite(std::uint64_t seed, double h, double tol) : rng_(seed, 0x6c0u), h_(h), tol_(tol) {}

    Spec random(Shape shape, double lo, double hi) {
        Spec s{std::move(shape), {}};
        s.values.resize(shape_numel(s.shape));
        for (auto& x : s.values) x = static_cast<double>(static_cast<T>(rng_.uniform(lo, hi)));
        return s;
    }

    /// Values in [lo, hi] with a random sign.
    Spec away_from_zero(Shape shape, double lo, double hi) {
        Spec s = random(std::move(shape), lo, hi);
        for (auto& x : s.values)
            if (rng_.next() & 1u) x = -x;
        return s;
    }

    Spec binary_mask(std::size_t h, std::size_t w) {
        Spec s{Shape{1, h, w}, std::vector<double>(h * w)};
        for (auto& x : s.values) x = rng_.uniform() < 0.4 ? 1.0 : 0.0;
        return s;
    }

    /// `fn(inputs, constants)` must be a generic callable usable with both precisions.
    template <typename Fn>
    void check(const std::string& name, const std::vector<Spec>& inputs, Fn fn, const std::vector<Spec>& constants = {}) {
        auto in_t = materialize<T>(inputs, true);
        auto in_r = materialize<R>(inputs, false);
        const auto k_t = materialize<T>(constants, false);
        const auto k_r = materialize<R>(constants, false);
        check_tensors(name, in_t, in_r, [&] { return fn(in_t, k_t); }, [&] { return fn(in_r, k_r); });
    }

    template <typename FnT, typename FnR>
    void check_tensors(const std::string& name, std::vector<Tensor<T>> in_t, std::vector<Tensor<R>> in_r,
                       const FnT& loss_t, const FnR& loss_r) {
        auto& tape = Tape<T>::active();
        tape.reset();
        for (auto& t : in_t) t.zero_grad();
        backward(loss_t());
        tape.reset();

        std::vector<std::pair<std::size_t, std::size_t>> coords;
        for (std::size_t k = 0; k < in_t.size(); ++k)
            for (std::size_t i = 0; i < in_t[k].numel(); ++i) coords.emplace_back(k, i);
        if (coords.size() > kCoordsPerCase) {
            pcg_shuffle(coords, rng_);
            coords.resize(kCoordsPerCase);
        }

        GradCheckCase result{name, coords.size(), 0.0, 0.0, true};
        NoGradGuard guard;
        const R h = static_cast<R>(h_);
        for (auto [k, i] : coords) {
            auto dr = in_r[k].data();
            const R saved = dr[i];
            dr[i] = saved + h;
            const R up = loss_r().item();
            dr[i] = saved - h;
            const R down = loss_r().item();
            dr[i] = saved;
            const double reference = static_cast<double>((up - down) / (R(2) * h));

            auto dt = in_t[k].data();
            const T saved_t = dt[i];
            dt[i] = static_cast<T>(static_cast<double>(saved_t) + h_);
            const double up_t = static_cast<double>(loss_t().item());
            dt[i] = static_cast<T>(static_cast<double>(saved_t) - h_);
            const double down_t = static_cast<double>(loss_t().item());
            dt[i] = saved_t;
            const double native = (up_t - down_t) / (2.0 * h_);

            const double analytic = static_cast<double>(in_t[k].grad()[i]);
            result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic, reference));
            result.native_rel_error = std::max(result.native_rel_error, relative_error(analytic, native));
        }
        result.passed = result.max_rel_error < tol_;
        cases_.push_back(result);
    }

    Pcg32& rng() { return rng_; }
    std::vector<GradCheckCase> take() { return std::move(cases_); }

private:
    Pcg32 rng_;
    double h_, tol_;
    std::vector<GradCheckCase> cases_;
};

#define GC_FN(...) [](const auto& in, [[maybe_unused]] const auto& k) { \
        using U = typename std::decay_t<decltype(in[0])>::value_type;       \
        (void)sizeof(U);                                                     \
        __VA_ARGS__                                                          \
    }

template <typename S>
void primitive_cases(S& s) {
    {
        const auto a = s.random({3, 4, 5}, -1, 1), b = s.random({3, 4, 5}, -1, 1);
        s.check("add", {a, b}, GC_FN(return contract(add(in[0], in[1]));));
        s.check("sub", {a, b}, GC_FN(return contract(sub(in[0], in[1]));));
        s.check("mul", {a, b}, GC_FN(return contract(mul(in[0], in[1]));));
    }
    {
        const auto a = s.random({4, 5, 6}, -1, 1), b = s.random({4, 1, 1}, -1, 1), c = s.random({4, 5, 1}, -1, 1);
        s.check("add_broadcast", {a, b}, GC_FN(return contract(add(in[0], in[1]));));
        s.check("sub_broadcast", {a, c}, GC_FN(return contract(sub(in[0], in[1]));));
        s.check("mul_broadcast", {a, b, c}, GC_FN(return contract(mul(mul(in[0], in[1]), in[2]));));
    }
    {
        const auto a = s.random({2, 3, 4}, -1, 1);
        s.check("scale", {a}, GC_FN(return contract(scale(in[0], U(-1.7)));));
        s.check("add_scalar", {a}, GC_FN(return contract(mul(add_scalar(in[0], U(0.3)), in[0]));));
    }
    {
        const auto a = s.random({5, 7}, -1, 1), b = s.random({7, 4}, -1, 1), v = s.random({7}, -1, 1);
        s.check("matmul", {a, b}, GC_FN(return contract(matmul(in[0], in[1]));));
        s.check("matmul_vector", {a, v}, GC_FN(return contract(matmul(in[0], in[1]));));
    }
    {
        const auto x = s.random({3, 9, 8}, -1, 1), w = s.random({4, 3, 3, 3}, -0.5, 0.5);
        const auto b = s.random({4}, -0.5, 0.5), w1 = s.random({5, 3, 1, 1}, -0.5, 0.5);
        const auto w2 = s.random({2, 3, 3, 2}, -0.5, 0.5);
        s.check("conv2d_same", {x, w, b}, GC_FN(return contract(conv2d(in[0], in[1], in[2], 1, 1));));
        s.check("conv2d_stride2", {x, w, b}, GC_FN(return contract(conv2d(in[0], in[1], in[2], 2, 1));));
        s.check("conv2d_1x1", {x, w1}, GC_FN(return contract(conv2d(in[0], in[1], Tensor<U>{}, 1, 0));));
        s.check("conv2d_rect_valid", {x, w2}, GC_FN(return contract(conv2d(in[0], in[1], Tensor<U>{}, 1, 0));));
    }
    {
        s.check("relu", {s.away_from_zero({4, 6}, 0.05, 2.0)}, GC_FN(return contract(relu(in[0]));));
        const auto b = s.random({4, 6}, -4, 4);
        s.check("sigmoid", {b}, GC_FN(return contract(sigmoid(in[0]));));
        s.check("softplus", {b}, GC_FN(return contract(softplus(in[0]));));
        s.check("reciprocal", {s.random({4, 6}, 0.5, 2.0)}, GC_FN(return contract(reciprocal(in[0]));));
        s.check("clamp_max", {s.away_from_zero({4, 6}, 0.05, 2.0)}, GC_FN(return contract(clamp_max(in[0], U(0)));));
    }
    {
        const auto a = s.random({3, 4, 5}, -1, 1);
        s.check("sum", {a}, GC_FN(auto y = sum(mul(in[0], in[0])); return mul(y, y);));
        s.check("mean", {a}, GC_FN(auto y = mean(mul(in[0], in[0])); return mul(y, y);));
        s.check("sum_axis0", {a}, GC_FN(return contract(sum_axis(in[0], 0));));
        s.check("sum_axis2", {a}, GC_FN(return contract(sum_axis(in[0], 2));));
        s.check("mean_axis1", {a}, GC_FN(return contract(mean_axis(in[0], 1));));
        s.check("global_average_pool", {a}, GC_FN(return contract(global_average_pool(in[0]));));
    }
    {
        const auto a = s.random({2, 5, 6}, -1, 1);
        s.check("bilinear_up", {a}, GC_FN(return contract(bilinear_resize(in[0], 11, 9));));
        s.check("bilinear_down", {a}, GC_FN(return contract(bilinear_resize(in[0], 3, 4));));
    }
    {
        const auto a = s.random({2, 4, 3}, -1, 1), b = s.random({3, 4, 3}, -1, 1), c = s.random({2, 4, 5}, -1, 1);
        s.check("concat_axis0", {a, b}, GC_FN(return contract(concat<U>({in[0], in[1]}, 0));));
        s.check("concat_axis2", {a, c}, GC_FN(return contract(concat<U>({in[0], in[1]}, 2));));
        s.check("slice", {b}, GC_FN(return contract(slice(in[0], 1, 1, 3));));
    }
    {
        s.check("broadcast_spatial", {s.random({4}, -1, 1)}, GC_FN(return contract(broadcast_spatial(in[0], 3, 5));));
        const auto a = s.random({2, 5, 4}, -1, 1);
        s.check("reflect_pad2d", {a}, GC_FN(return contract(reflect_pad2d(in[0], 2));));
        s.check("reshape", {a}, GC_FN(return contract(reshape(in[0], Shape{10, 4}));));
    }
}

template <typename S>
void loss_cases(S& s) {
    const auto logits = s.random({1, 12, 12}, -3, 3);
    const auto target = s.binary_mask(12, 12);
    const auto lss_mean = s.random({1, 12, 12}, -1, 1);
    const auto lss_small = s.random({1, 6, 6}, -1, 1);
    s.check("bce_loss", {logits}, GC_FN(return bce_loss(in[0], k[0]);), {target});
    s.check("dice_loss", {logits}, GC_FN(return dice_loss(sigmoid(in[0]), k[0]);), {target});
    s.check("sobel", {s.random({1, 7, 9}, -1, 1)}, GC_FN(
        auto [gx, gy] = sobel_gradients(in[0]);
        return add(contract(gx), contract(gy));));
    s.check("bal_loss", {logits}, GC_FN(return bal_loss(in[0], k[0]);), {lss_mean});
    s.check("bal_loss_resized", {logits}, GC_FN(return bal_loss(in[0], k[0]);), {lss_small});
    s.check("total_loss", {logits, s.random({1, 3, 3}, -3, 3), s.random({1, 6, 6}, -3, 3)},
            GC_FN(return total_loss(in[0], in[1], in[2], k[0], k[1], LossWeights{}).total;), {target, lss_mean});
}

template <typename U>
LtcParams<U> ltc_from(const std::vector<Tensor<U>>& in) {
    LtcParams<U> p;
    p.w_h = in[0];
    p.w_in = in[1];
    p.w_tau = in[2];
    p.b = in[3];
    return p;
}

template <typename S>
void ltc_cases(S& s) {
    const std::size_t hidden = 6, input = 5;
    const std::vector<Spec> all{s.random({hidden, hidden}, -0.5, 0.5), s.random({hidden, input}, -0.5, 0.5),
                                s.random({hidden, input}, -0.5, 0.5),  s.random({hidden}, 0.2, 0.6),
                                s.random({input}, 0.1, 1.0),           s.random({hidden}, -0.5, 0.5)};
    s.check("ltc_tau", all, GC_FN(return contract(ltc_tau(in[4], ltc_from(in)));));
    s.check("ltc_derivative", all, GC_FN(return contract(ltc_derivative(in[5], in[4], ltc_from(in)));));
    s.check("ltc_rollout_T4", all,
            GC_FN(return contract(euler_rollout(in[5], in[4], ltc_from(in), RolloutConfig{4, 0.3}).final_state);));
    s.check("ltc_rollout_T4_clamped", all,
            GC_FN(return contract(euler_rollout(in[5], in[4], ltc_from(in), RolloutConfig{4, 5.0}).final_state);));
}

template <typename T, typename R>
void network_case(Suite<T, R>& s) {
    NetworkConfig cfg;
    cfg.input_h = cfg.input_w = 16;
    cfg.encoder_channels = {2, 3, 4, 5};
    cfg.stem_channels = 2;
    cfg.ltc_hidden = 4;
    cfg.steps = 4;
    cfg.lss.patch_size = 3;
    cfg.lss.search_radius = 2;
    cfg.seed = s.rng().next();
    LssLtcNet<T> net_t(cfg);
    LssLtcNet<R> net_r(cfg);
    auto params_t = net_t.parameters();
    auto params_r = net_r.parameters();
    std::vector<Tensor<T>> in_t;
    std::vector<Tensor<R>> in_r;
    for (std::size_t k = 0; k < params_t.size(); ++k) {
        auto& [name, t] = params_t[k];
        // Zero-initialized biases leave ReLUs sitting exactly on their kink
        // wherever a receptive field is dead; use small random biases instead.
        if (name.ends_with(".bias") || name == "ltc.b")
            for (auto& v : t.data()) v = static_cast<T>(s.rng().uniform(-0.1, 0.1));
        auto dst = params_r[k].second.data();
        for (std::size_t i = 0; i < t.numel(); ++i) dst[i] = static_cast<R>(t.data()[i]);
        in_t.push_back(t);
        in_r.push_back(params_r[k].second);
    }

    ImageT<double> img(3, 16, 16);
    for (auto& v : img.data) v = static_cast<double>(static_cast<T>(s.rng().uniform()));
    const auto map = compute_lss_map(img, cfg.lss);
    std::vector<double> lss_values(map.data.begin(), map.data.end());
    for (auto& v : lss_values) v = static_cast<double>(static_cast<T>(v));
    const std::vector<Spec> consts{{Shape{3, 16, 16}, img.data}, {Shape{3, 16, 16}, lss_values}, s.binary_mask(16, 16)};
    const auto k_t = materialize<T>(consts, false);
    const auto k_r = materialize<R>(consts, false);
    auto loss = [](const auto& net, const auto& k) {
        const auto out = net.forward(k[0], k[1]);
        return total_loss(out.main_logits, out.aux1_logits, out.aux2_logits, k[2], slice(k[1], 0, 0, 1), LossWeights{})
            .total;
    };
    s.check_tensors("network_total_loss", in_t, in_r, [&] { return loss(net_t, k_t); },
                    [&] { return loss(net_r, k_r); });
}

#undef GC_FN

template <typename T, typename R>
GradCheckReport run(std::uint64_t seed, double h, double tol, int bits) {
    Suite<T, R> s(seed, h, tol);
    primitive_cases(s);
    loss_cases(s);
    ltc_cases(s);
    network_case(s);
    GradCheckReport r;
    r.bits = bits;
    r.step = h;
    r.tolerance = tol;
    r.cases = s.take();
    return r;
}

}  // namespace

GradCheckReport run_gradcheck(int bits, std::uint64_t seed) {
    if (bits == 64) return run<double, long double>(seed, 1e-6, 1e-5, 64);
    if (bits == 32) return run<float, double>(seed, 1e-3, 1e-3, 32);
    throw std::invalid_argument("gradcheck: bits must be 32 or 64, got " + std::to_string(bits));
}

}  // namespace lssltc
