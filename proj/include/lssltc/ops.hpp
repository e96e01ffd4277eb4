#pragma once

#include <cstddef>
#include <vector>

#include "lssltc/tensor.hpp"

// Differentiable primitives. Every op checks operand shapes, computes its
// forward value eagerly, and registers its adjoint on the active tape when any
// input requires a gradient.
//
// Binary elementwise ops broadcast the right operand over trailing singleton
// dimensions only: b must have the same rank as a, agree with a on a leading
// prefix of axes, and be 1 on the rest (e.g. a bias of shape {C,1,1}).

namespace lssltc {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);

/// {M,K} x {K,N} -> {M,N}, or {M,K} x {K} -> {M}.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// input {Cin,H,W}, weight {Cout,Cin,kh,kw}, bias {Cout} or undefined.
/// Zero padding of `padding` pixels on every side.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t padding = 0);

template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> softplus(const Tensor<T>& a);
template <typename T> Tensor<T> reciprocal(const Tensor<T>& a);
/// min(a, limit) elementwise.
template <typename T> Tensor<T> clamp_max(const Tensor<T>& a, T limit);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
/// Reduces `axis` away (the result has rank-1 dims; rank-1 input gives {1}).
template <typename T> Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis);
template <typename T> Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis);

/// {C,H,W} -> {C}
template <typename T> Tensor<T> global_average_pool(const Tensor<T>& a);

/// {C,H,W} -> {C,out_h,out_w}, half-pixel centers, edge clamped.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& a, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Half-open range [start, stop) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t stop);

/// {C} -> {C,H,W}, each channel constant.
template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& v, std::size_t height, std::size_t width);

/// {C,H,W} -> {C,H+2p,W+2p}, mirror padding without edge repetition.
template <typename T> Tensor<T> reflect_pad2d(const Tensor<T>& a, std::size_t pad);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

/// Index into [0, n) mirroring about the edges without repeating them.
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n);

/// Worker threads used by the matrix-multiply backend.
void set_compute_threads(int threads);

}  // namespace lssltc
