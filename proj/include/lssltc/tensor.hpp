#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lssltc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised by tensor primitives when operand shapes do not conform.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when debug checks find a NaN/Inf entering a primitive.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised on misuse of the tape (non-scalar loss, double backward).
class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major array with optional gradient buffer.
///
/// A Tensor is a cheap handle: copies share storage. Use clone() for a deep
/// copy. Scalars are represented with shape {1}.
template <typename T>
class Tensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<T> data() { return node_->data; }
    std::span<const T> data() const { return node_->data; }
    std::span<T> grad() { return node_->grad; }
    std::span<const T> grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag);
    void zero_grad();

    /// Value of a single-element tensor.
    T item() const;

    /// Deep copy without gradient history.
    Tensor clone() const;

    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

/// Ordered record of adjoints for the ops executed since the last reset().
///
/// One tape per thread and scalar type. backward() replays the adjoints in
/// reverse and marks the tape consumed; it must be reset() before the next
/// backward().
template <typename T>
class Tape {
public:
    static Tape& active();

    void record(std::function<void()> adjoint);
    void backward(const Tensor<T>& loss);
    void reset();

    std::size_t size() const { return adjoints_.size(); }
    bool consumed() const { return consumed_; }

private:
    std::vector<std::function<void()>> adjoints_;
    bool consumed_ = false;
};

template <typename T>
void backward(const Tensor<T>& loss) {
    Tape<T>::active().backward(loss);
}

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// When enabled every primitive rejects non-finite inputs.
void set_debug_checks(bool enabled);
bool debug_checks();

}  // namespace lssltc
