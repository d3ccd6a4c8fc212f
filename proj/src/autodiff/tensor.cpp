// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "node.hpp"

#include <sstream>
#include <stdexcept>

namespace mimic::ad {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
        throw std::invalid_argument("tensor: shape " + to_string(shape) + " holds " +
                                    std::to_string(numel(shape)) + " elements, got " +
                                    std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->storage = std::make_shared<std::vector<double>>(std::move(values));
    node->requires_grad = requires_grad;
    if (requires_grad) node->id = detail::Node::next_id();
    return node;
}

}  // namespace

std::uint64_t detail::Node::next_id() { return g_next_id.fetch_add(1, std::memory_order_relaxed); }

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = ad::numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_leaf({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::size(std::size_t axis) const {
    if (axis >= node_->shape.size()) {
        throw std::out_of_range("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                                to_string(node_->shape));
    }
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->storage->size(); }
DType Tensor::dtype() const { return node_->dtype; }

std::span<const double> Tensor::data() const { return {node_->storage->data(), node_->storage->size()}; }

std::span<double> Tensor::mutable_data() {
    if (node_->recorded) throw std::logic_error("tensor: cannot mutate the output of a recorded op");
    return {node_->storage->data(), node_->storage->size()};
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("tensor: item() on shape " + to_string(shape()));
    return (*node_->storage)[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    if (node_->recorded) throw std::logic_error("tensor: requires_grad can only be set on leaves");
    node_->requires_grad = value;
    if (value && node_->id == 0) node_->id = detail::Node::next_id();
    return *this;
}

bool Tensor::is_leaf() const { return !node_->recorded; }

std::optional<std::uint64_t> Tensor::node_id() const {
    if (node_->id == 0) return std::nullopt;
    return node_->id;
}

const std::string& Tensor::op_name() const { return node_->op; }

Tensor Tensor::clone() const {
    auto node = make_leaf(node_->shape, *node_->storage, false);
    node->dtype = node_->dtype;
    return Tensor(node);
}

Tensor Tensor::to(DType dtype) const {
    auto values = *node_->storage;
    if (dtype == DType::kFloat32) {
        for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
    }
    auto node = make_leaf(node_->shape, std::move(values), node_->requires_grad);
    node->dtype = dtype;
    return Tensor(node);
}

Tensor make_op_result(std::string op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                      BackwardFn backward) {
    if (numel(shape) != values.size()) {
        throw std::logic_error("op " + op + ": produced " + std::to_string(values.size()) +
                               " values for shape " + to_string(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->op = std::move(op);
    bool any_grad = false;
    for (const auto& in : inputs) {
        if (!in.defined()) continue;
        if (in.dtype() == DType::kFloat32) node->dtype = DType::kFloat32;
        any_grad = any_grad || in.requires_grad();
    }
    if (node->dtype == DType::kFloat32) {
        for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
    }
    node->storage = std::make_shared<std::vector<double>>(std::move(values));
    if (any_grad && GradMode::enabled()) {
        node->requires_grad = true;
        node->recorded = true;
        node->id = detail::Node::next_id();
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
    }
    return Tensor(node);
}

Tensor make_constant_view(const Tensor& t) {
    auto node = std::make_shared<detail::Node>();
    node->shape = t.node_->shape;
    node->storage = t.node_->storage;
    node->dtype = t.node_->dtype;
    node->op = "const";
    return Tensor(node);
}

Tensor detach(const Tensor& a) {
    auto node = std::make_shared<detail::Node>();
    node->shape = a.node_->shape;
    node->storage = a.node_->storage;
    node->dtype = a.node_->dtype;
    node->op = "detach";
    return Tensor(node);
}

}  // namespace mimic::ad
