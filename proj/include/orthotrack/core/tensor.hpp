#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "orthotrack/core/errors.hpp"

namespace orthotrack {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense float64 tensor, row-major, participating in a reverse-mode graph.
///
/// A Tensor is a cheap handle; copies alias the same storage. Leaves created
/// with requires_grad accumulate gradients across backward() calls until
/// zero_grad(). Graph nodes hold only their inputs, so a graph is released as
/// soon as the last handle to its root goes away.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const;
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    /// Gradient buffer, allocated (zeroed) on first access.
    std::span<double> grad_buffer() const;
    void zero_grad();

    /// Back-propagates d(this)/d(leaf) into every reachable leaf. Scalar only.
    void backward() const;

    /// Same values, cut from the graph.
    Tensor detach() const;

    const detail::Node* node() const { return node_.get(); }

  private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    friend Tensor make_op(Shape, std::vector<double>, std::initializer_list<Tensor>,
                          std::function<void(std::span<const double>)>);
    friend Tensor make_op(Shape, std::vector<double>, const std::vector<Tensor>&,
                          std::function<void(std::span<const double>)>);

    std::shared_ptr<detail::Node> node_;
};

using BackwardFn = std::function<void(std::span<const double>)>;

/// Creates the output of a differentiable operation. `backward` receives the
/// gradient w.r.t. the output and accumulates into the inputs it captured (via
/// grad_buffer()). The closure is dropped when no input requires grad or when
/// a NoGradGuard is active.
Tensor make_op(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
               BackwardFn backward);
Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
               BackwardFn backward);

/// Disables graph construction on the current thread for its lifetime.
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

} // namespace orthotrack
