#include "lssltc/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <tuple>

#include "lssltc/ops.hpp"

namespace lssltc {

void LossWeights::validate() const {
    for (double w : {main, aux1, aux2, boundary}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and >= 0");
    }
}

double LossBundle::weighted_total(const LossBundle& p, const LossWeights& w) {
    return w.main * (p.bce_main + p.dice_main) + w.aux1 * (p.bce_aux1 + p.dice_aux1) +
           w.aux2 * (p.bce_aux2 + p.dice_aux2) + w.boundary * p.bal;
}

namespace {

void expect_same(const char* op, const Shape& a, const Shape& b) {
    if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target) {
    expect_same("bce_loss", logits.shape(), target.shape());
    return mean(sub(softplus(logits), mul(logits, target)));
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& target, T smooth) {
    expect_same("dice_loss", probs.shape(), target.shape());
    const Tensor<T> numer = add_scalar(scale(sum(mul(probs, target)), T(2)), smooth);
    const Tensor<T> denom = add_scalar(add(sum(probs), sum(target)), smooth);
    return add_scalar(scale(mul(numer, reciprocal(denom)), T(-1)), T(1));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> sobel_gradients(const Tensor<T>& field) {
    if (field.rank() != 3 || field.dim(0) != 1 || field.dim(1) < 3 || field.dim(2) < 3) {
        throw ShapeError("sobel_gradients: need a {1,H,W} field with H,W >= 3, got " + shape_str(field.shape()));
    }
    static const std::vector<T> kernels = {
        -1, 0, 1, -2, 0, 2, -1, 0, 1,   // Gx
        -1, -2, -1, 0, 0, 0, 1, 2, 1,   // Gy
    };
    const Tensor<T> weight(Shape{2, 1, 3, 3}, kernels);
    const Tensor<T> both = conv2d(reflect_pad2d(field, 1), weight, Tensor<T>{}, 1, 0);
    return {slice(both, 0, 0, 1), slice(both, 0, 1, 2)};
}

template <typename T>
Tensor<T> bal_loss(const Tensor<T>& pred_logits, const Tensor<T>& lss_mean) {
    if (pred_logits.rank() != 3 || lss_mean.rank() != 3 || lss_mean.dim(0) != 1) {
        throw ShapeError("bal_loss: expected {1,H,W} fields, got " + shape_str(pred_logits.shape()) + " and " +
                         shape_str(lss_mean.shape()));
    }
    Tensor<T> reference(lss_mean.shape(), std::vector<T>(lss_mean.data().begin(), lss_mean.data().end()));
    if (reference.dim(1) != pred_logits.dim(1) || reference.dim(2) != pred_logits.dim(2)) {
        NoGradGuard guard;
        reference = bilinear_resize(reference, pred_logits.dim(1), pred_logits.dim(2));
    }
    expect_same("bal_loss", pred_logits.shape(), reference.shape());
    auto [px, py] = sobel_gradients(sigmoid(pred_logits));
    Tensor<T> rx, ry;
    {
        NoGradGuard guard;
        std::tie(rx, ry) = sobel_gradients(reference);
    }
    const Tensor<T> dx = sub(px, rx);
    const Tensor<T> dy = sub(py, ry);
    return scale(add(mean(mul(dx, dx)), mean(mul(dy, dy))), T(0.5));
}

template <typename T>
Tensor<T> downsample_mask(const Tensor<T>& mask, std::size_t out_h, std::size_t out_w) {
    if (mask.rank() != 3 || mask.dim(0) != 1 || out_h == 0 || out_w == 0 || mask.dim(1) % out_h != 0 ||
        mask.dim(2) % out_w != 0) {
        throw ShapeError("downsample_mask: cannot reduce " + shape_str(mask.shape()) + " to " + std::to_string(out_h) +
                         "x" + std::to_string(out_w));
    }
    const std::size_t fy = mask.dim(1) / out_h, fx = mask.dim(2) / out_w, w = mask.dim(2);
    Tensor<T> out(Shape{1, out_h, out_w});
    auto src = mask.data();
    auto dst = out.data();
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (std::size_t dy = 0; dy < fy; ++dy)
                for (std::size_t dx = 0; dx < fx; ++dx) acc += static_cast<double>(src[(y * fy + dy) * w + x * fx + dx]);
            dst[y * out_w + x] = acc / static_cast<double>(fy * fx) >= 0.5 ? T(1) : T(0);
        }
    return out;
}

template <typename T>
LossTerms<T> total_loss(const Tensor<T>& main_logits, const Tensor<T>& aux1_logits, const Tensor<T>& aux2_logits,
                        const Tensor<T>& target, const Tensor<T>& lss_mean, const LossWeights& weights) {
    weights.validate();
    const Tensor<T> t1 = downsample_mask(target, aux1_logits.dim(1), aux1_logits.dim(2));
    const Tensor<T> t2 = downsample_mask(target, aux2_logits.dim(1), aux2_logits.dim(2));

    const Tensor<T> bce_m = bce_loss(main_logits, target);
    const Tensor<T> dice_m = dice_loss(sigmoid(main_logits), target);
    const Tensor<T> bce_1 = bce_loss(aux1_logits, t1);
    const Tensor<T> dice_1 = dice_loss(sigmoid(aux1_logits), t1);
    const Tensor<T> bce_2 = bce_loss(aux2_logits, t2);
    const Tensor<T> dice_2 = dice_loss(sigmoid(aux2_logits), t2);
    const Tensor<T> bal = bal_loss(main_logits, lss_mean);

    const std::pair<const char*, const Tensor<T>*> parts[] = {
        {"bce_main", &bce_m}, {"dice_main", &dice_m}, {"bce_aux1", &bce_1}, {"dice_aux1", &dice_1},
        {"bce_aux2", &bce_2}, {"dice_aux2", &dice_2}, {"bal", &bal},
    };
    for (const auto& [name, t] : parts) {
        if (!std::isfinite(t->item())) throw std::runtime_error(std::string("total_loss: non-finite ") + name);
    }

    Tensor<T> total = scale(add(bce_m, dice_m), static_cast<T>(weights.main));
    total = add(total, scale(add(bce_1, dice_1), static_cast<T>(weights.aux1)));
    total = add(total, scale(add(bce_2, dice_2), static_cast<T>(weights.aux2)));
    total = add(total, scale(bal, static_cast<T>(weights.boundary)));

    LossTerms<T> out{total, {}};
    auto& v = out.values;
    v.bce_main = bce_m.item();
    v.dice_main = dice_m.item();
    v.bce_aux1 = bce_1.item();
    v.dice_aux1 = dice_1.item();
    v.bce_aux2 = bce_2.item();
    v.dice_aux2 = dice_2.item();
    v.bal = bal.item();
    v.total = total.item();
    if (!std::isfinite(v.total)) throw std::runtime_error("total_loss: non-finite total");
    return out;
}

#define LSSLTC_INSTANTIATE_LOSSES(T)                                                                    \
    template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> dice_loss(const Tensor<T>&, const Tensor<T>&, T);                                \
    template std::pair<Tensor<T>, Tensor<T>> sobel_gradients(const Tensor<T>&);                         \
    template Tensor<T> bal_loss(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> downsample_mask(const Tensor<T>&, std::size_t, std::size_t);                     \
    template LossTerms<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                     const Tensor<T>&, const LossWeights&);

LSSLTC_INSTANTIATE_LOSSES(float)
LSSLTC_INSTANTIATE_LOSSES(double)
LSSLTC_INSTANTIATE_LOSSES(long double)

#undef LSSLTC_INSTANTIATE_LOSSES

}  // namespace lssltc
