#include "lssltc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>

namespace lssltc {

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<bool> g_debug_checks{false};

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : node_(std::make_shared<detail::Node<T>>()) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
    }
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    }
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{1}, value, requires_grad);
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    if (flag) {
        node_->grad.assign(node_->data.size(), T(0));
    } else {
        node_->grad.clear();
    }
}

template <typename T>
void Tensor<T>::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
    return node_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    return Tensor(node_->shape, node_->data, node_->requires_grad);
}

template <typename T>
Tape<T>& Tape<T>::active() {
    thread_local Tape<T> tape;
    return tape;
}

template <typename T>
void Tape<T>::record(std::function<void()> adjoint) {
    adjoints_.push_back(std::move(adjoint));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw TapeError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    if (consumed_) throw TapeError("backward: tape already replayed; call reset() first");
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.node()->grad[0] += T(1);
    for (auto it = adjoints_.rbegin(); it != adjoints_.rend(); ++it) (*it)();
}

template <typename T>
void Tape<T>::reset() {
    adjoints_.clear();
    consumed_ = false;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

void set_debug_checks(bool enabled) { g_debug_checks.store(enabled); }
bool debug_checks() { return g_debug_checks.load(); }

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class Tensor<long double>;
template class Tape<long double>;

}  // namespace lssltc
