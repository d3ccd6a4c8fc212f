// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Dense tensors with optional participation in a reverse-mode gradient tape.
//
// A Tensor is a cheap handle: copies share the same node (and therefore the same
// values and tape entry). Values of recorded (non-leaf) tensors are immutable; leaf
// tensors such as optimizer parameters may be updated in place between steps.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mimic::ad {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { kFloat64 = 0, kFloat32 = 1 };

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;

/// Maps the upstream gradient of an op's output to one gradient per input (an
/// undefined Tensor means "no contribution").
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad)>;

namespace detail {
struct Node;
}

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t size(std::size_t axis) const;
    std::size_t numel() const;
    DType dtype() const;

    std::span<const double> data() const;
    /// Writable view of a leaf's values. Throws for recorded op outputs.
    std::span<double> mutable_data();
    double item() const;
    double operator[](std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    bool is_leaf() const;
    /// Creation-sequence id of the tape node, present for recorded ops and grad leaves.
    std::optional<std::uint64_t> node_id() const;
    const std::string& op_name() const;

    /// Deep copy as a fresh leaf (no tape participation, requires_grad false).
    Tensor clone() const;
    /// Leaf copy stored with the requested precision.
    Tensor to(DType dtype) const;

    /// Stable identity used to key gradient maps.
    const void* identity() const { return node_.get(); }

  private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    friend struct detail::Node;
    friend Tensor make_op_result(std::string, Shape, std::vector<double>, std::vector<Tensor>,
                                 BackwardFn);
    friend Tensor make_constant_view(const Tensor&);
    friend class Tape;
    friend class Gradients;
    friend Tensor detach(const Tensor& a);

    std::shared_ptr<detail::Node> node_;
};

/// Thread-local switch controlling whether ops record onto the tape.
class GradMode {
  public:
    static bool enabled();
    static void set_enabled(bool enabled);
};

class NoGradGuard {
  public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

class EnableGradGuard {
  public:
    EnableGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(true); }
    ~EnableGradGuard() { GradMode::set_enabled(previous_); }
    EnableGradGuard(const EnableGradGuard&) = delete;
    EnableGradGuard& operator=(const EnableGradGuard&) = delete;

  private:
    bool previous_;
};

/// Builds an op output. The node is recorded (parents + backward kept) only when
/// grad mode is on and at least one input requires grad. Values are rounded to
/// 32-bit if any input is 32-bit.
Tensor make_op_result(std::string op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs, BackwardFn backward);

/// Untracked tensor sharing the storage of `t` (used to save op outputs for backward
/// without creating ownership cycles).
Tensor make_constant_view(const Tensor& t);

/// Same values, no tape participation. Shares storage with `a`.
Tensor detach(const Tensor& a);

}  // namespace mimic::ad
