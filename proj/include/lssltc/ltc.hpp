#pragma once

#include <cstddef>
#include <vector>

#include "lssltc/synth.hpp"
#include "lssltc/tensor.hpp"

namespace lssltc {

struct RolloutConfig {
    std::size_t steps = 4;
    double dt = 1.0;

    void validate() const;
};

/// Liquid time-constant cell parameters:
///   dh/dt = (-h + relu(W_h h + W_in x + b)) / tau(x),  tau(x) = softplus(W_tau x) + eps.
template <typename T>
struct LtcParams {
    Tensor<T> w_h;    // hidden x hidden
    Tensor<T> w_in;   // hidden x input
    Tensor<T> w_tau;  // hidden x input
    Tensor<T> b;      // hidden
    T epsilon_tau = T(1e-3);

    /// W_* ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0, all requiring grad.
    static LtcParams init(std::size_t hidden, std::size_t input, Pcg32& rng);

    std::size_t hidden_dim() const { return w_h.dim(0); }
    std::size_t input_dim() const { return w_in.dim(1); }
    /// Throws ShapeError on inconsistent dimensions, std::invalid_argument on non-finite values.
    void validate() const;
};

template <typename T>
struct LtcState {
    Tensor<T> h;
    std::size_t step_index = 0;
};

template <typename T>
struct Rollout {
    Tensor<T> final_state;
    std::vector<Tensor<T>> trajectory;  // steps + 1 states, trajectory[0] == h0
    std::size_t clamp_events = 0;       // components where dt/tau was capped at 1
};

template <typename T>
Tensor<T> ltc_tau(const Tensor<T>& x, const LtcParams<T>& params);

template <typename T>
Tensor<T> ltc_derivative(const Tensor<T>& h, const Tensor<T>& x, const LtcParams<T>& params);

/// One Euler step h + min(dt/tau, 1) * (relu(...) - h). The cap keeps the
/// update a convex combination of h and the drive; below it the step is
/// exactly h + dt * dh/dt. `clamp_events` (if given) is incremented per capped
/// component.
template <typename T>
LtcState<T> euler_step(const LtcState<T>& state, const Tensor<T>& x, const LtcParams<T>& params, double dt,
                       std::size_t* clamp_events = nullptr);

/// `cfg.steps` Euler steps with a fixed input. Throws std::runtime_error naming
/// the step if the state becomes non-finite.
template <typename T>
Rollout<T> euler_rollout(const Tensor<T>& h0, const Tensor<T>& x, const LtcParams<T>& params,
                         const RolloutConfig& cfg);

/// [GAP(features); GAP(initial_mask); GAP(current_mask)], length C + 2.
template <typename T>
Tensor<T> build_bottleneck_input(const Tensor<T>& features, const Tensor<T>& initial_mask,
                                 const Tensor<T>& current_mask);

/// proj {out, hidden} times h_T.
template <typename T>
Tensor<T> refinement_token(const Tensor<T>& h_final, const Tensor<T>& proj);

}  // namespace lssltc
