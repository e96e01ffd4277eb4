#pragma once

#include <string>
#include <utility>

#include "lssltc/tensor.hpp"

namespace lssltc {

/// Deep-supervision weights of the composite objective.
struct LossWeights {
    double main = 1.0;
    double aux1 = 0.4;
    double aux2 = 0.2;
    double boundary = 0.5;

    void validate() const;
};

/// Plain values of every loss component; total is the weighted sum.
struct LossBundle {
    double bce_main = 0, dice_main = 0;
    double bce_aux1 = 0, dice_aux1 = 0;
    double bce_aux2 = 0, dice_aux2 = 0;
    double bal = 0;
    double total = 0;

    /// main*(bce+dice) + aux1*(bce+dice) + aux2*(bce+dice) + boundary*bal.
    static double weighted_total(const LossBundle& parts, const LossWeights& w);
};

/// Mean binary cross-entropy from logits in the stable form softplus(z) - t*z.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target);

/// 1 - (2 sum(p t) + smooth) / (sum(p) + sum(t) + smooth).
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& target, T smooth = T(1));

/// 3x3 Sobel responses (Gx, Gy) of a {1,H,W} field with reflect padding.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> sobel_gradients(const Tensor<T>& field);

/// Mean over pixels and both Sobel axes of (grad sigmoid(logits) - grad lss_mean)^2.
/// lss_mean is bilinearly resized to the prediction size and never receives gradient.
template <typename T>
Tensor<T> bal_loss(const Tensor<T>& pred_logits, const Tensor<T>& lss_mean);

/// Area-average a {1,H,W} binary mask down by an integer factor, then threshold at 0.5.
template <typename T>
Tensor<T> downsample_mask(const Tensor<T>& mask, std::size_t out_h, std::size_t out_w);

template <typename T>
struct LossTerms {
    Tensor<T> total;
    LossBundle values;
};

/// Full objective. target is full resolution; it is downsampled to each aux
/// head. Throws std::runtime_error naming the first non-finite component.
template <typename T>
LossTerms<T> total_loss(const Tensor<T>& main_logits, const Tensor<T>& aux1_logits, const Tensor<T>& aux2_logits,
                        const Tensor<T>& target, const Tensor<T>& lss_mean, const LossWeights& weights);

}  // namespace lssltc
