// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mimic/tensor.hpp"

#include <optional>
#include <unordered_map>
#include <vector>

namespace mimic::ad {

struct BackwardOptions;
class Gradients;

/// The recorded operations reachable from a root, in creation order. Creation order
/// is a topological order: an op's inputs always exist before the op does.
class Tape {
  public:
    struct Entry {
        std::uint64_t id;
        std::string op;
        std::vector<std::uint64_t> parents;
    };

    static Tape record(const Tensor& root);

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

  private:
    friend class Gradients;
    friend Gradients backward(const Tensor&, const BackwardOptions&);
    std::vector<Entry> entries_;
    std::vector<Tensor> tensors_;  // parallel to entries_
};

/// Gradients keyed by tensor identity.
class Gradients {
  public:
    std::optional<Tensor> find(const Tensor& t) const;
    /// The gradient, or zeros shaped like `t` when none reached it.
    Tensor of(const Tensor& t) const;
    bool contains(const Tensor& t) const { return map_.count(t.identity()) != 0; }
    std::size_t size() const { return map_.size(); }
    bool empty() const { return map_.empty(); }

  private:
    friend Gradients backward(const Tensor&, const BackwardOptions&);
    std::unordered_map<const void*, Tensor> map_;
};

struct BackwardOptions {
    /// Record the backward computation so the returned gradients can be
    /// differentiated again.
    bool create_graph = false;
    /// Non-leaf tensors whose gradients should also be reported.
    std::vector<Tensor> inputs;
};

/// Reverse sweep from a scalar root. Reports gradients for every reachable leaf that
/// requires grad, plus `options.inputs`.
Gradients backward(const Tensor& root, const BackwardOptions& options = {});

}  // namespace mimic::ad
