#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jssu {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes do not satisfy an operation's contract.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Graph recording is on by default; NoGradGuard disables it for a scope.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    std::vector<T>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), T(0));
        return grad;
    }
};

/// Dense row-major tensor handle. Copies share the underlying node; results of
/// differentiable operations record their inputs while grad mode is enabled.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const;
    std::size_t size() const { return node_->value.size(); }

    std::span<const T> data() const { return node_->value; }
    // Only meaningful on leaves (parameters, inputs); recorded results are
    // treated as immutable by the backward pass.
    std::span<T> mutable_data() { return node_->value; }
    T item() const;
    T operator[](std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    Tensor grad_tensor() const;
    void zero_grad() { node_->grad.clear(); }

    /// Reverse-mode sweep from a single-element tensor.
    void backward() const;

    /// Fresh leaf holding a copy of the values.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(node_->value.begin(), node_->value.end());
        return Tensor<U>(node_->shape, std::move(out));
    }

    const std::shared_ptr<Node<T>>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<Node<T>> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Builds an op result. Inputs and the backward closure are kept only when
/// grad mode is on and at least one input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      const char* op, std::function<void(Node<T>&)> backward);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace jssu
