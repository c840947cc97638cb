// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "adaptqa/errors.h"

namespace adaptqa {

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_tape_counter{0};

detail::TensorNode& checked(const std::shared_ptr<detail::TensorNode>& node) {
    if (!node) {
        throw ContractError("operation on an undefined tensor");
    }
    return *node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

void detail::TensorNode::ensure_grad() {
    if (grad.size() != data.size()) {
        grad.assign(data.size(), 0.0);
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    for (std::size_t extent : shape) {
        if (extent == 0) {
            throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
        }
    }
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("shape " + shape_to_string(shape) + " needs " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(data.size()));
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->tape_index = ++g_tape_counter;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(m * n);
    for (const auto& row : rows) {
        if (row.size() != n) {
            throw DimensionError("ragged matrix literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return from_data({m, n}, std::move(data), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
    return from_data({values.size()}, std::vector<double>(values), requires_grad);
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() { return checked(node_).data; }

double Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
    }
    return node_->data[0];
}

double Tensor::at(std::size_t i) const {
    const auto& d = checked(node_).data;
    if (i >= d.size()) {
        throw ContractError("flat index " + std::to_string(i) + " out of range");
    }
    return d[i];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    if (rank() != 2 || row >= dim(0) || col >= dim(1)) {
        throw ContractError("index (" + std::to_string(row) + "," + std::to_string(col) +
                            ") invalid for " + shape_to_string(shape()));
    }
    return node_->data[row * node_->shape[1] + col];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool value) { checked(node_).requires_grad = value; }

bool Tensor::has_grad() const {
    const auto& n = checked(node_);
    return !n.grad.empty();
}

std::span<const double> Tensor::grad() const {
    const auto& n = checked(node_);
    if (n.grad.empty()) {
        throw ContractError("tensor has no gradient");
    }
    return n.grad;
}

std::span<double> Tensor::mutable_grad() {
    auto& n = checked(node_);
    n.ensure_grad();
    return n.grad;
}

void Tensor::zero_grad() {
    auto& n = checked(node_);
    n.grad.assign(n.data.size(), 0.0);
}

void Tensor::clear_grad() {
    auto& n = checked(node_);
    n.grad.clear();
    n.grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
    const auto& n = checked(node_);
    return from_data(n.shape, n.data, n.requires_grad);
}

bool Tensor::all_finite() const {
    const auto& d = checked(node_).data;
    return std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
}

bool grad_mode_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace detail {

namespace {

template <typename Range>
Tensor make_result_impl(Shape shape, std::vector<double> data, const Range& inputs,
                        std::function<void(TensorNode&)> backward_fn) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(data));
    if (!t_grad_enabled) {
        return out;
    }
    bool any = false;
    for (const Tensor& t : inputs) {
        if (t.defined() && t.requires_grad()) {
            any = true;
            break;
        }
    }
    if (!any) {
        return out;
    }
    auto& node = *out.node();
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) {
        node.inputs.push_back(t.node());
    }
    node.backward = std::move(backward_fn);
    return out;
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   std::function<void(TensorNode&)> backward_fn) {
    return make_result_impl(std::move(shape), std::move(data), inputs, std::move(backward_fn));
}

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   std::function<void(TensorNode&)> backward_fn) {
    return make_result_impl(std::move(shape), std::move(data), inputs, std::move(backward_fn));
}

}  // namespace detail

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got " +
                            (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward() on a loss that was not recorded with any trainable input");
    }

    // Collect the reachable tape segment. Shared handles keep every node
    // alive while upstream nodes release their inputs below.
    std::vector<std::shared_ptr<detail::TensorNode>> order;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::shared_ptr<detail::TensorNode>> stack{loss.node()};
    while (!stack.empty()) {
        auto n = std::move(stack.back());
        stack.pop_back();
        if (!seen.insert(n.get()).second) continue;
        for (const auto& in : n->inputs) {
            if (in && in->requires_grad) stack.push_back(in);
        }
        order.push_back(std::move(n));
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) {
                  return a->tape_index > b->tape_index;
              });

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (const auto& n : order) {
        if (!n->backward) continue;
        if (!n->grad.empty()) {
            n->backward(*n);
        }
        // Consume the tape: interior nodes release their inputs.
        n->backward = nullptr;
        n->inputs.clear();
    }
}

}  // namespace adaptqa
