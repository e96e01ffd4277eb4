#include "lssltc/ltc.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lssltc/ops.hpp"

namespace lssltc {

void RolloutConfig::validate() const {
    if (steps == 0) throw std::invalid_argument("ltc: rollout needs at least one step");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("ltc: dt must be positive and finite");
}

namespace {

template <typename T>
Tensor<T> uniform_matrix(std::size_t rows, std::size_t cols, Pcg32& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::vector<T> values(rows * cols);
    for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>(Shape{rows, cols}, std::move(values), true);
}

template <typename T>
void expect_vector(const char* op, const Tensor<T>& v, std::size_t len, const char* what) {
    if (v.rank() != 1 || v.dim(0) != len) {
        throw ShapeError(std::string(op) + ": " + what + " has shape " + shape_str(v.shape()) + ", expected [" +
                         std::to_string(len) + "]");
    }
}

}  // namespace

template <typename T>
LtcParams<T> LtcParams<T>::init(std::size_t hidden, std::size_t input, Pcg32& rng) {
    LtcParams p;
    p.w_h = uniform_matrix<T>(hidden, hidden, rng);
    p.w_in = uniform_matrix<T>(hidden, input, rng);
    p.w_tau = uniform_matrix<T>(hidden, input, rng);
    p.b = Tensor<T>(Shape{hidden}, T(0), true);
    return p;
}

template <typename T>
void LtcParams<T>::validate() const {
    const std::size_t hdim = w_h.dim(0);
    if (w_h.rank() != 2 || w_h.dim(1) != hdim) throw ShapeError("ltc: W_h must be square, got " + shape_str(w_h.shape()));
    if (w_in.rank() != 2 || w_in.dim(0) != hdim) throw ShapeError("ltc: W_in shape " + shape_str(w_in.shape()));
    if (w_tau.rank() != 2 || w_tau.dim(0) != hdim || w_tau.dim(1) != w_in.dim(1)) {
        throw ShapeError("ltc: W_tau shape " + shape_str(w_tau.shape()) + " inconsistent with W_in " +
                         shape_str(w_in.shape()));
    }
    expect_vector("ltc", b, hdim, "b");
    if (!(epsilon_tau > T(0))) throw std::invalid_argument("ltc: epsilon_tau must be positive");
    for (const Tensor<T>* t : {&w_h, &w_in, &w_tau, &b}) {
        for (T v : t->data())
            if (!std::isfinite(v)) throw std::invalid_argument("ltc: non-finite parameter");
    }
}

template <typename T>
Tensor<T> ltc_tau(const Tensor<T>& x, const LtcParams<T>& params) {
    expect_vector("ltc_tau", x, params.input_dim(), "x");
    return add_scalar(softplus(matmul(params.w_tau, x)), params.epsilon_tau);
}

namespace {

template <typename T>
Tensor<T> drive(const Tensor<T>& h, const Tensor<T>& x, const LtcParams<T>& params) {
    expect_vector("ltc", h, params.hidden_dim(), "h");
    expect_vector("ltc", x, params.input_dim(), "x");
    return relu(add(add(matmul(params.w_h, h), matmul(params.w_in, x)), params.b));
}

}  // namespace

template <typename T>
Tensor<T> ltc_derivative(const Tensor<T>& h, const Tensor<T>& x, const LtcParams<T>& params) {
    return mul(sub(drive(h, x, params), h), reciprocal(ltc_tau(x, params)));
}

template <typename T>
LtcState<T> euler_step(const LtcState<T>& state, const Tensor<T>& x, const LtcParams<T>& params, double dt,
                       std::size_t* clamp_events) {
    if (!(dt >= 0.0)) throw std::invalid_argument("ltc: dt must be non-negative");
    const Tensor<T> ratio_raw = scale(reciprocal(ltc_tau(x, params)), static_cast<T>(dt));
    if (clamp_events != nullptr) {
        for (T r : ratio_raw.data())
            if (r > T(1)) ++*clamp_events;
    }
    const Tensor<T> ratio = clamp_max(ratio_raw, T(1));
    const Tensor<T> delta = sub(drive(state.h, x, params), state.h);
    LtcState<T> next{add(state.h, mul(ratio, delta)), state.step_index + 1};
    for (T v : next.h.data()) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("ltc: non-finite hidden state at step " + std::to_string(next.step_index));
        }
    }
    return next;
}

template <typename T>
Rollout<T> euler_rollout(const Tensor<T>& h0, const Tensor<T>& x, const LtcParams<T>& params,
                         const RolloutConfig& cfg) {
    cfg.validate();
    params.validate();
    expect_vector("euler_rollout", h0, params.hidden_dim(), "h0");
    Rollout<T> out;
    LtcState<T> state{h0, 0};
    out.trajectory.push_back(h0);
    for (std::size_t t = 0; t < cfg.steps; ++t) {
        state = euler_step(state, x, params, cfg.dt, &out.clamp_events);
        out.trajectory.push_back(state.h);
    }
    out.final_state = state.h;
    return out;
}

template <typename T>
Tensor<T> build_bottleneck_input(const Tensor<T>& features, const Tensor<T>& initial_mask,
                                 const Tensor<T>& current_mask) {
    if (features.rank() != 3) {
        throw ShapeError("build_bottleneck_input: features must be {C,H,W}, got " + shape_str(features.shape()));
    }
    const Shape mask_shape{1, features.dim(1), features.dim(2)};
    if (initial_mask.shape() != mask_shape || current_mask.shape() != mask_shape) {
        throw ShapeError("build_bottleneck_input: masks " + shape_str(initial_mask.shape()) + "/" +
                         shape_str(current_mask.shape()) + " do not match features " + shape_str(features.shape()));
    }
    return concat<T>({global_average_pool(features), global_average_pool(initial_mask),
                      global_average_pool(current_mask)},
                     0);
}

template <typename T>
Tensor<T> refinement_token(const Tensor<T>& h_final, const Tensor<T>& proj) {
    if (proj.rank() != 2 || h_final.rank() != 1 || proj.dim(1) != h_final.dim(0)) {
        throw ShapeError("refinement_token: projection " + shape_str(proj.shape()) + " cannot map state " +
                         shape_str(h_final.shape()));
    }
    return matmul(proj, h_final);
}

#define LSSLTC_INSTANTIATE_LTC(T)                                                                        \
    template struct LtcParams<T>;                                                                        \
    template Tensor<T> ltc_tau(const Tensor<T>&, const LtcParams<T>&);                                   \
    template Tensor<T> ltc_derivative(const Tensor<T>&, const Tensor<T>&, const LtcParams<T>&);          \
    template LtcState<T> euler_step(const LtcState<T>&, const Tensor<T>&, const LtcParams<T>&, double,   \
                                    std::size_t*);                                                       \
    template Rollout<T> euler_rollout(const Tensor<T>&, const Tensor<T>&, const LtcParams<T>&,           \
                                      const RolloutConfig&);                                             \
    template Tensor<T> build_bottleneck_input(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
    template Tensor<T> refinement_token(const Tensor<T>&, const Tensor<T>&);

LSSLTC_INSTANTIATE_LTC(float)
LSSLTC_INSTANTIATE_LTC(double)
LSSLTC_INSTANTIATE_LTC(long double)

#undef LSSLTC_INSTANTIATE_LTC

}  // namespace lssltc
