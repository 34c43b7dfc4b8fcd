#include "orthotrack/core/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace orthotrack {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;
};

} // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

const Shape kEmptyShape{};

} // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
    node_->value.assign(shape_numel(shape), 0.0);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
    if (values.size() != shape_numel(shape)) {
        throw DimensionError("tensor: " + std::to_string(values.size()) + " values for shape " +
                             shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

const Shape& Tensor::shape() const { return node_ ? node_->shape : kEmptyShape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(shape()));
    }
    return shape()[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::size_t Tensor::rows() const {
    if (rank() != 2) {
        throw DimensionError("tensor: expected a matrix, got " + shape_str(shape()));
    }
    return shape()[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) {
        throw DimensionError("tensor: expected a matrix, got " + shape_str(shape()));
    }
    return shape()[1];
}

std::span<const double> Tensor::values() const {
    if (!node_) {
        return {};
    }
    return node_->value;
}

std::span<double> Tensor::mutable_values() {
    if (!node_) {
        return {};
    }
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("tensor: item() on " + shape_str(shape()));
    }
    return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!node_) {
        return {};
    }
    return node_->grad;
}

std::span<double> Tensor::grad_buffer() const {
    if (node_->grad.size() != node_->value.size()) {
        node_->grad.assign(node_->value.size(), 0.0);
    }
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) {
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw DimensionError("backward: loss must be a scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) {
        return;
    }

    // Iterative post-order DFS; inputs are visited in declaration order so the
    // accumulation order, and therefore the result, is fixed.
    std::vector<detail::Node*> order;
    std::unordered_set<const detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* node : order) {
        if (node->backward) {
            node->grad.assign(node->value.size(), 0.0);
        } else if (node->grad.size() != node->value.size()) {
            node->grad.assign(node->value.size(), 0.0);
        }
    }
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) {
            (*it)->backward((*it)->grad);
        }
    }
}

Tensor Tensor::detach() const {
    if (!node_) {
        return {};
    }
    return Tensor(node_->shape, node_->value, false);
}

Tensor make_op(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
               BackwardFn backward) {
    return make_op(std::move(shape), std::move(value), std::vector<Tensor>(inputs), std::move(backward));
}

Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
               BackwardFn backward) {
    if (value.size() != shape_numel(shape)) {
        throw DimensionError("make_op: " + std::to_string(value.size()) + " values for shape " +
                             shape_str(shape));
    }
    auto out = std::make_shared<detail::Node>();
    out->shape = std::move(shape);
    out->value = std::move(value);
    if (g_grad_enabled) {
        for (const auto& t : inputs) {
            if (t.requires_grad()) {
                out->inputs.push_back(t.node_);
            }
        }
    }
    if (!out->inputs.empty()) {
        out->requires_grad = true;
        out->backward = std::move(backward);
    }
    return Tensor(std::move(out));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

} // namespace orthotrack
