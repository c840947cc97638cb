// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensor with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle: copies share storage, `clone()` makes a deep
// detached copy. Every differentiable op appends its result to an implicit
// tape (a monotonically increasing sequence number on each node); backward()
// replays the reachable part of that tape in reverse order and then releases
// it, so a graph is never reused across steps.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace adaptqa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::uint64_t tape_index = 0;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backward;

    void ensure_grad();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    /// Row-major 2-D literal, e.g. `Tensor::matrix({{1, 2}, {3, 4}})`.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad = false);
    static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Direct write access. Only valid on leaves; mutating an interior node
    /// corrupts the recorded backward pass.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    void set_requires_grad(bool value);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    /// Allocates (if needed) and zero-fills the gradient buffer.
    void zero_grad();
    /// Drops the gradient buffer entirely.
    void clear_grad();

    Tensor clone() const;
    bool all_finite() const;
    /// True when both handles refer to the same storage.
    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

    /// Internal: used by op implementations.
    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::TensorNode> node_;
};

/// Runs reverse-mode accumulation from a scalar loss into every reachable
/// leaf with requires_grad. Gradients add onto whatever the leaves already hold.
void backward(const Tensor& loss);

/// True when ops should record onto the tape.
bool grad_mode_enabled();

/// Disables recording for its lifetime (evaluation passes, finite differences).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {

/// Builds an op result. When recording is on and any input requires a
/// gradient, the result joins the tape with `backward_fn`.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(TensorNode&)> backward_fn);
Tensor make_result(Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& inputs,
                   std::function<void(TensorNode&)> backward_fn);

}  // namespace detail

}  // namespace adaptqa
