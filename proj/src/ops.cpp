#include "lssltc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <type_traits>
#include <utility>

#include "blas.hpp"

namespace lssltc {

namespace {

template <typename T>
using Accum = std::conditional_t<std::is_same_v<T, float>, double, T>;

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
void check_finite(const char* op, const Tensor<T>& t) {
    if (!debug_checks()) return;
    for (T v : t.data()) {
        if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + ": non-finite input value");
    }
}

template <typename T>
bool needs_grad(std::initializer_list<const Tensor<T>*> inputs) {
    if (!grad_enabled()) return false;
    for (const auto* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

template <typename T>
Tensor<T> make_out(Shape shape, bool grad) {
    Tensor<T> out(std::move(shape));
    if (grad) out.set_requires_grad(true);
    return out;
}

// Output columns [lo, hi) whose tap kx lands inside an input row of width w.
std::pair<std::size_t, std::size_t> valid_columns(std::size_t kx, std::size_t stride, std::size_t padding,
                                                  std::size_t w, std::size_t wo) {
    const std::size_t lo = kx >= padding ? 0 : (padding - kx + stride - 1) / stride;
    if (w + padding <= kx) return {0, 0};
    const std::size_t hi = std::min(wo, (w - 1 + padding - kx) / stride + 1);
    return {std::min(lo, hi), hi};
}

template <typename T, typename F>
void record(F&& adjoint) {
    Tape<T>::active().record(std::forward<F>(adjoint));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Number of consecutive elements of `a` that share one element of `b`.
std::size_t broadcast_inner(const char* op, const Shape& a, const Shape& b) {
    if (a == b) return 1;
    if (a.size() != b.size()) shape_fail(op, a, b);
    std::size_t k = 0;
    while (k < a.size() && a[k] == b[k]) ++k;
    std::size_t inner = 1;
    for (std::size_t j = k; j < b.size(); ++j) {
        if (b[j] != 1) shape_fail(op, a, b);
        inner *= a[j];
    }
    return inner;
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T x) {
    return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Unary elementwise op with a derivative expressed through (input, output).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* op, const Tensor<T>& a, Fwd fwd, Deriv deriv) {
    check_finite(op, a);
    const bool grad = needs_grad<T>({&a});
    Tensor<T> out = make_out<T>(a.shape(), grad);
    auto x = a.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    if (grad) {
        record<T>([an = a.node(), on = out.node(), deriv] {
            const auto n = on->data.size();
            for (std::size_t i = 0; i < n; ++i) {
                an->grad[i] += on->grad[i] * deriv(an->data[i], on->data[i]);
            }
        });
    }
    return out;
}

}  // namespace

void set_compute_threads(int threads) { openblas_set_num_threads(threads < 1 ? 1 : threads); }

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    const auto inner = broadcast_inner("add", a.shape(), b.shape());
    check_finite("add", a);
    check_finite("add", b);
    const bool grad = needs_grad<T>({&a, &b});
    Tensor<T> out = make_out<T>(a.shape(), grad);
    auto x = a.data();
    auto z = b.data();
    auto y = out.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + z[i / inner];
    if (grad) {
        record<T>([an = a.node(), bn = b.node(), on = out.node(), inner] {
            const auto n = on->data.size();
            if (an->requires_grad)
                for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
            if (bn->requires_grad)
                for (std::size_t i = 0; i < n; ++i) bn->grad[i / inner] += on->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    const auto inner = broadcast_inner("sub", a.shape(), b.shape());
    check_finite("sub", a);
    check_finite("sub", b);
    const bool grad = needs_grad<T>({&a, &b});
    Tensor<T> out = make_out<T>(a.shape(), grad);
    auto x = a.data();
    auto z = b.data();
    auto y = out.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - z[i / inner];
    if (grad) {
        record<T>([an = a.node(), bn = b.node(), on = out.node(), inner] {
            const auto n = on->data.size();
            if (an->requires_grad)
                for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
            if (bn->requires_grad)
                for (std::size_t i = 0; i < n; ++i) bn->grad[i / inner] -= on->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    const auto inner = broadcast_inner("mul", a.shape(), b.shape());
    check_finite("mul", a);
    check_finite("mul", b);
    const bool grad = needs_grad<T>({&a, &b});
    Tensor<T> out = make_out<T>(a.shape(), grad);
    auto x = a.data();
    auto z = b.data();
    auto y = out.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i / inner];
    if (grad) {
        record<T>([an = a.node(), bn = b.node(), on = out.node(), inner] {
            const auto n = on->data.size();
            if (an->requires_grad)
                for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->data[i / inner];
            if (bn->requires_grad)
                for (std::size_t i = 0; i < n; ++i) bn->grad[i / inner] += on->grad[i] * an->data[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return unary<T>("scale", a, [factor](T x) { return x * factor; },
                    [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
    return unary<T>("add_scalar", a, [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2) || a.dim(1) != b.dim(0)) {
        shape_fail("matmul", a.shape(), b.shape());
    }
    check_finite("matmul", a);
    check_finite("matmul", b);
    const int m = static_cast<int>(a.dim(0));
    const int k = static_cast<int>(a.dim(1));
    const int n = b.rank() == 2 ? static_cast<int>(b.dim(1)) : 1;
    Shape out_shape = b.rank() == 2 ? Shape{a.dim(0), b.dim(1)} : Shape{a.dim(0)};
    const bool grad = needs_grad<T>({&a, &b});
    Tensor<T> out = make_out<T>(std::move(out_shape), grad);
    blas::gemm(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0),
               out.data().data(), n);
    if (grad) {
        record<T>([an = a.node(), bn = b.node(), on = out.node(), m, n, k] {
            if (an->requires_grad) {
                blas::gemm(false, true, m, k, n, T(1), on->grad.data(), n, bn->data.data(), n, T(1),
                           an->grad.data(), k);
            }
            if (bn->requires_grad) {
                blas::gemm(true, false, k, n, m, T(1), an->data.data(), k, on->grad.data(), n, T(1),
                           bn->grad.data(), n);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
    if (input.rank() != 3 || weight.rank() != 4 || weight.dim(1) != input.dim(0)) {
        shape_fail("conv2d", input.shape(), weight.shape());
    }
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (kh > h + 2 * padding || kw > w + 2 * padding) {
        throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                         shape_str(input.shape()) + " with padding " + std::to_string(padding));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
        shape_fail("conv2d(bias)", weight.shape(), bias.shape());
    }
    check_finite("conv2d", input);
    check_finite("conv2d", weight);
    if (bias.defined()) check_finite("conv2d", bias);

    const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
    const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
    const std::size_t ck = cin * kh * kw;
    const std::size_t hw = ho * wo;
    const bool pointwise = kh == 1 && kw == 1 && stride == 1 && padding == 0;

    // im2col: cols[(c*kh + ky)*kw + kx][oy*wo + ox]
    std::shared_ptr<T[]> cols;
    if (!pointwise) {
        cols.reset(new T[ck * hw]);
        auto x = input.data();
        for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    T* row = cols.get() + ((c * kh + ky) * kw + kx) * hw;
                    const auto [lo, hi] = valid_columns(kx, stride, padding, w, wo);
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        T* dst = row + oy * wo;
                        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                        static_cast<std::ptrdiff_t>(padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                            std::fill_n(dst, wo, T(0));
                            continue;
                        }
                        const T* src = x.data() + (c * h + static_cast<std::size_t>(iy)) * w;
                        std::fill(dst, dst + lo, T(0));
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride + kx - padding];
                        std::fill(dst + hi, dst + wo, T(0));
                    }
                }
            }
        }
    }

    const bool grad = needs_grad<T>({&input, &weight, &bias});
    Tensor<T> out = make_out<T>(Shape{cout, ho, wo}, grad);
    auto y = out.data();
    if (bias.defined()) {
        auto bv = bias.data();
        for (std::size_t co = 0; co < cout; ++co) std::fill_n(y.begin() + co * hw, hw, bv[co]);
    }
    const T* col_ptr = pointwise ? input.data().data() : cols.get();
    blas::gemm(false, false, static_cast<int>(cout), static_cast<int>(hw), static_cast<int>(ck), T(1),
               weight.data().data(), static_cast<int>(ck), col_ptr, static_cast<int>(hw),
               bias.defined() ? T(1) : T(0), y.data(), static_cast<int>(hw));

    if (grad) {
        detail::Node<T>* bias_raw = bias.defined() ? bias.node().get() : nullptr;
        record<T>([xn = input.node(), wn = weight.node(), bn = bias.node(), on = out.node(), cols, bias_raw,
                   pointwise, cin, h, w, cout, kh, kw, ho, wo, ck, hw, stride, padding] {
            const T* g = on->grad.data();
            const int icout = static_cast<int>(cout), ihw = static_cast<int>(hw), ick = static_cast<int>(ck);
            if (wn->requires_grad) {
                const T* cp = pointwise ? xn->data.data() : cols.get();
                blas::gemm(false, true, icout, ick, ihw, T(1), g, ihw, cp, ihw, T(1), wn->grad.data(), ick);
            }
            if (bias_raw != nullptr && bias_raw->requires_grad) {
                for (std::size_t co = 0; co < cout; ++co) {
                    T acc = T(0);
                    for (std::size_t i = 0; i < hw; ++i) acc += g[co * hw + i];
                    bias_raw->grad[co] += acc;
                }
            }
            if (xn->requires_grad) {
                if (pointwise) {
                    blas::gemm(true, false, ick, ihw, icout, T(1), wn->data.data(), ick, g, ihw, T(1),
                               xn->grad.data(), ihw);
                    return;
                }
                const std::unique_ptr<T[]> dcols(new T[ck * hw]);
                blas::gemm(true, false, ick, ihw, icout, T(1), wn->data.data(), ick, g, ihw, T(0),
                           dcols.get(), ihw);
                for (std::size_t c = 0; c < cin; ++c) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const T* row = dcols.get() + ((c * kh + ky) * kw + kx) * hw;
                            for (std::size_t oy = 0; oy < ho; ++oy) {
                                const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                static_cast<std::ptrdiff_t>(padding);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                T* dst = xn->grad.data() + (c * h + static_cast<std::size_t>(iy)) * w;
                                const T* src = row + oy * wo;
                                const auto [lo, hi] = valid_columns(kx, stride, padding, w, wo);
                                for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * stride + kx - padding] += src[ox];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary<T>("relu", a, [](T x) { return x > T(0) ? x : T(0); },
                    [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary<T>("sigmoid", a, [](T x) { return stable_sigmoid(x); },
                    [](T, T s) { return s * (T(1) - s); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
    return unary<T>("softplus", a, [](T x) { return stable_softplus(x); },
                    [](T x, T) { return stable_sigmoid(x); });
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& a) {
    return unary<T>("reciprocal", a, [](T x) { return T(1) / x; }, [](T, T r) { return -r * r; });
}

template <typename T>
Tensor<T> clamp_max(const Tensor<T>& a, T limit) {
    return unary<T>("clamp_max", a, [limit](T x) { return x < limit ? x : limit; },
                    [limit](T x, T) { return x < limit ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    check_finite("sum", a);
    const bool grad = needs_grad<T>({&a});
    Tensor<T> out = make_out<T>(Shape{1}, grad);
    Accum<T> acc = 0;
    for (T v : a.data()) acc += static_cast<Accum<T>>(v);
    out.data()[0] = static_cast<T>(acc);
    if (grad) {
        record<T>([an = a.node(), on = out.node()] {
            const T g = on->grad[0];
            for (auto& v : an->grad) v += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis) {
    if (axis >= a.rank()) {
        throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
    }
    check_finite("sum_axis", a);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const std::size_t len = a.dim(axis);
    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.dim(i));
    if (out_shape.empty()) out_shape.push_back(1);
    const bool grad = needs_grad<T>({&a});
    Tensor<T> out = make_out<T>(std::move(out_shape), grad);
    auto x = a.data();
    auto y = out.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i) y[o * inner + i] += x[(o * len + l) * inner + i];
    if (grad) {
        record<T>([an = a.node(), on = out.node(), outer, len, inner] {
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t l = 0; l < len; ++l)
                    for (std::size_t i = 0; i < inner; ++i)
                        an->grad[(o * len + l) * inner + i] += on->grad[o * inner + i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis) {
    if (axis >= a.rank()) {
        throw ShapeError("mean_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
    }
    return scale(sum_axis(a, axis), T(1) / static_cast<T>(a.dim(axis)));
}

template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& a) {
    if (a.rank() != 3) throw ShapeError("global_average_pool: expected {C,H,W}, got " + shape_str(a.shape()));
    return mean_axis(reshape(a, Shape{a.dim(0), a.dim(1) * a.dim(2)}), 1);
}

namespace {

struct LerpAxis {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac;
};

LerpAxis lerp_axis(std::size_t in, std::size_t out) {
    LerpAxis ax;
    ax.lo.resize(out);
    ax.hi.resize(out);
    ax.frac.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
        double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        auto lo = static_cast<std::size_t>(src);
        if (lo > in - 1) lo = in - 1;
        ax.lo[i] = lo;
        ax.hi[i] = std::min(lo + 1, in - 1);
        ax.frac[i] = src - static_cast<double>(lo);
    }
    return ax;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& a, std::size_t out_h, std::size_t out_w) {
    if (a.rank() != 3) throw ShapeError("bilinear_resize: expected {C,H,W}, got " + shape_str(a.shape()));
    if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: zero output size");
    check_finite("bilinear_resize", a);
    const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
    auto ys = std::make_shared<LerpAxis>(lerp_axis(h, out_h));
    auto xs = std::make_shared<LerpAxis>(lerp_axis(w, out_w));
    const bool grad = needs_grad<T>({&a});
    Tensor<T> out = make_out<T>(Shape{c, out_h, out_w}, grad);
    auto x = a.data();
    auto y = out.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* src = x.data() + ch * h * w;
        T* dst = y.data() + ch * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const T fy = static_cast<T>(ys->frac[oy]);
            const T* r0 = src + ys->lo[oy] * w;
            const T* r1 = src + ys->hi[oy] * w;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const T fx = static_cast<T>(xs->frac[ox]);
                const std::size_t x0 = xs->lo[ox], x1 = xs->hi[ox];
                const T top = r0[x0] * (T(1) - fx) + r0[x1] * fx;
                const T bot = r1[x0] * (T(1) - fx) + r1[x1] * fx;
                dst[oy * out_w + ox] = top * (T(1) - fy) + bot * fy;
            }
        }
    }
    if (grad) {
        record<T>([an = a.node(), on = out.node(), ys, xs, c, h, w, out_h, out_w] {
            for (std::size_t ch = 0; ch < c; ++ch) {
                T* src = an->grad.data() + ch * h * w;
                const T* g = on->grad.data() + ch * out_h * out_w;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const T fy = static_cast<T>(ys->frac[oy]);
                    T* r0 = src + ys->lo[oy] * w;
                    T* r1 = src + ys->hi[oy] * w;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const T fx = static_cast<T>(xs->frac[ox]);
                        const T gv = g[oy * out_w + ox];
                        const std::size_t x0 = xs->lo[ox], x1 = xs->hi[ox];
                        r0[x0] += gv * (T(1) - fy) * (T(1) - fx);
                        r0[x1] += gv * (T(1) - fy) * fx;
                        r1[x0] += gv * fy * (T(1) - fx);
                        r1[x1] += gv * fy * fx;
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& ref = parts.front().shape();
    if (axis >= ref.size()) throw ShapeError("concat: axis out of range for " + shape_str(ref));
    Shape out_shape = ref;
    out_shape[axis] = 0;
    bool grad = false;
    for (const auto& p : parts) {
        if (p.rank() != ref.size()) shape_fail("concat", ref, p.shape());
        for (std::size_t i = 0; i < ref.size(); ++i)
            if (i != axis && p.dim(i) != ref[i]) shape_fail("concat", ref, p.shape());
        out_shape[axis] += p.dim(axis);
        check_finite("concat", p);
        grad = grad || needs_grad<T>({&p});
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
    for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
    const std::size_t out_row = out_shape[axis] * inner;
    Tensor<T> out = make_out<T>(out_shape, grad);
    auto y = out.data();
    std::size_t offset = 0;
    std::vector<NodePtr<T>> nodes;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        const std::size_t row = p.dim(axis) * inner;
        auto x = p.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(x.begin() + o * row, row, y.begin() + o * out_row + offset);
        nodes.push_back(p.node());
        offsets.push_back(offset);
        offset += row;
    }
    if (grad) {
        record<T>([nodes, offsets, on = out.node(), outer, out_row] {
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                auto& n = *nodes[k];
                if (!n.requires_grad) continue;
                const std::size_t row = n.data.size() / outer;
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < row; ++i)
                        n.grad[o * row + i] += on->grad[o * out_row + offsets[k] + i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t stop) {
    if (axis >= a.rank() || start >= stop || stop > a.dim(axis)) {
        throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
                         ") on axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
    }
    check_finite("slice", a);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    Shape out_shape = a.shape();
    out_shape[axis] = stop - start;
    const std::size_t in_row = a.dim(axis) * inner;
    const std::size_t out_row = (stop - start) * inner;
    const std::size_t offset = start * inner;
    const bool grad = needs_grad<T>({&a});
    Tensor<T> out = make_out<T>(std::move(out_shape), grad);
    auto x = a.data();
    auto y = out.data();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.begin() + o * in_row + offset, out_row, y.begin() + o * out_row);
    if (grad) {
        record<T>([an = a.node(), on = out.node(), outer, in_row, out_row, offset] {
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < out_row; ++i)
                    an->grad[o * in_row + offset + i] += on->grad[o * out_row + i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& v, std::size_t height, std::size_t width) {
    if (v.rank() != 1) throw ShapeError("broadcast_spatial: expected a vector, got " + shape_str(v.shape()));
    check_finite("broadcast_spatial", v);
    const std::size_t c = v.dim(0), hw = height * width;
    const bool grad = needs_grad<T>({&v});
    Tensor<T> out = make_out<T>(Shape{c, height, width}, grad);
    auto x = v.data();
    auto y = out.data();
    for (std::size_t ch = 0; ch < c; ++ch) std::fill_n(y.begin() + ch * hw, hw, x[ch]);
    if (grad) {
        record<T>([vn = v.node(), on = out.node(), c, hw] {
            for (std::size_t ch = 0; ch < c; ++ch) {
                T acc = T(0);
                for (std::size_t i = 0; i < hw; ++i) acc += on->grad[ch * hw + i];
                vn->grad[ch] += acc;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> reflect_pad2d(const Tensor<T>& a, std::size_t pad) {
    if (a.rank() != 3) throw ShapeError("reflect_pad2d: expected {C,H,W}, got " + shape_str(a.shape()));
    check_finite("reflect_pad2d", a);
    const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
    const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
    auto rows = std::make_shared<std::vector<std::size_t>>(ph);
    auto colsx = std::make_shared<std::vector<std::size_t>>(pw);
    const auto p = static_cast<std::ptrdiff_t>(pad);
    for (std::size_t i = 0; i < ph; ++i)
        (*rows)[i] = static_cast<std::size_t>(reflect_index(static_cast<std::ptrdiff_t>(i) - p,
                                                            static_cast<std::ptrdiff_t>(h)));
    for (std::size_t i = 0; i < pw; ++i)
        (*colsx)[i] = static_cast<std::size_t>(reflect_index(static_cast<std::ptrdiff_t>(i) - p,
                                                             static_cast<std::ptrdiff_t>(w)));
    const bool grad = needs_grad<T>({&a});
    Tensor<T> out = make_out<T>(Shape{c, ph, pw}, grad);
    auto x = a.data();
    auto y = out.data();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < ph; ++i)
            for (std::size_t j = 0; j < pw; ++j)
                y[(ch * ph + i) * pw + j] = x[(ch * h + (*rows)[i]) * w + (*colsx)[j]];
    if (grad) {
        record<T>([an = a.node(), on = out.node(), rows, colsx, c, h, w, ph, pw] {
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < ph; ++i)
                    for (std::size_t j = 0; j < pw; ++j)
                        an->grad[(ch * h + (*rows)[i]) * w + (*colsx)[j]] += on->grad[(ch * ph + i) * pw + j];
        });
    }
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    const bool grad = needs_grad<T>({&a});
    Tensor<T> out(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()), grad);
    if (grad) {
        record<T>([an = a.node(), on = out.node()] {
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        });
    }
    return out;
}

#define LSSLTC_INSTANTIATE_OPS(T)                                                                  \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> scale(const Tensor<T>&, T);                                                 \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                            \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,   \
                              std::size_t);                                                        \
    template Tensor<T> relu(const Tensor<T>&);                                                     \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
    template Tensor<T> softplus(const Tensor<T>&);                                                 \
    template Tensor<T> reciprocal(const Tensor<T>&);                                               \
    template Tensor<T> clamp_max(const Tensor<T>&, T);                                             \
    template Tensor<T> sum(const Tensor<T>&);                                                      \
    template Tensor<T> mean(const Tensor<T>&);                                                     \
    template Tensor<T> sum_axis(const Tensor<T>&, std::size_t);                                    \
    template Tensor<T> mean_axis(const Tensor<T>&, std::size_t);                                   \
    template Tensor<T> global_average_pool(const Tensor<T>&);                                      \
    template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);                \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                         \
    template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);             \
    template Tensor<T> broadcast_spatial(const Tensor<T>&, std::size_t, std::size_t);              \
    template Tensor<T> reflect_pad2d(const Tensor<T>&, std::size_t);                               \
    template Tensor<T> reshape(const Tensor<T>&, Shape);

LSSLTC_INSTANTIATE_OPS(float)
LSSLTC_INSTANTIATE_OPS(double)
LSSLTC_INSTANTIATE_OPS(long double)

#undef LSSLTC_INSTANTIATE_OPS

}  // namespace lssltc
