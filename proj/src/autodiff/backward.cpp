// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/backward.hpp"

#include "mimic/ops.hpp"
#include "node.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace mimic::ad {

Tape Tape::record(const Tensor& root) {
    std::vector<Tensor> found;
    std::unordered_set<const void*> seen;
    std::vector<Tensor> stack;
    if (root.requires_grad()) stack.push_back(root);
    while (!stack.empty()) {
        Tensor t = stack.back();
        stack.pop_back();
        if (!seen.insert(t.identity()).second) continue;
        found.push_back(t);
        for (const auto& in : detail::Node::unwrap(t)->inputs) {
            if (in.defined() && in.requires_grad() && !seen.count(in.identity())) stack.push_back(in);
        }
    }
    std::sort(found.begin(), found.end(),
              [](const Tensor& a, const Tensor& b) { return *a.node_id() < *b.node_id(); });
    Tape tape;
    tape.tensors_ = found;
    tape.entries_.reserve(found.size());
    for (const auto& t : found) {
        const auto& node = detail::Node::unwrap(t);
        Entry e{node->id, node->op, {}};
        for (const auto& in : node->inputs) {
            if (in.defined() && in.requires_grad()) e.parents.push_back(*in.node_id());
        }
        tape.entries_.push_back(std::move(e));
    }
    return tape;
}

std::optional<Tensor> Gradients::find(const Tensor& t) const {
    auto it = map_.find(t.identity());
    if (it == map_.end()) return std::nullopt;
    return it->second;
}

Tensor Gradients::of(const Tensor& t) const {
    if (auto g = find(t)) return *g;
    return Tensor::zeros(t.shape());
}

Gradients backward(const Tensor& root, const BackwardOptions& options) {
    if (!root.defined() || root.numel() != 1) {
        throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                    (root.defined() ? to_string(root.shape()) : std::string("<undefined>")));
    }
    Gradients result;
    if (!root.requires_grad()) return result;

    const Tape tape = Tape::record(root);
    std::optional<NoGradGuard> no_grad;
    std::optional<EnableGradGuard> with_grad;
    if (options.create_graph) {
        with_grad.emplace();
    } else {
        no_grad.emplace();
    }

    std::unordered_set<const void*> wanted;
    for (const auto& t : options.inputs) wanted.insert(t.identity());

    std::unordered_map<const void*, Tensor> grads;
    grads.emplace(root.identity(), Tensor::full(root.shape(), 1.0));

    for (std::size_t i = tape.tensors_.size(); i-- > 0;) {
        const Tensor& t = tape.tensors_[i];
        auto it = grads.find(t.identity());
        if (it == grads.end()) continue;
        const auto& node = detail::Node::unwrap(t);
        if (!node->recorded) {
            result.map_.emplace(t.identity(), it->second);
            continue;
        }
        if (wanted.count(t.identity())) result.map_.emplace(t.identity(), it->second);
        const Tensor upstream = it->second;
        if (!node->backward) throw std::logic_error("backward: op " + node->op + " has no backward");
        auto input_grads = node->backward(upstream);
        if (input_grads.size() != node->inputs.size()) {
            throw std::logic_error("backward: op " + node->op + " returned wrong gradient count");
        }
        for (std::size_t k = 0; k < input_grads.size(); ++k) {
            const auto& in = node->inputs[k];
            auto& g = input_grads[k];
            if (!in.defined() || !in.requires_grad() || !g.defined()) continue;
            if (g.shape() != in.shape()) {
                throw std::logic_error("backward: op " + node->op + " produced gradient " + to_string(g.shape()) +
                                       " for input " + to_string(in.shape()));
            }
            auto [slot, inserted] = grads.emplace(in.identity(), g);
            if (!inserted) slot->second = add(slot->second, g);
        }
        // Intermediate gradients are no longer needed once propagated.
        if (!options.create_graph) grads.erase(t.identity());
    }
    return result;
}

}  // namespace mimic::ad
