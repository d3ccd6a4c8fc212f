// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mimic/tensor.hpp"

#include <atomic>

namespace mimic::ad::detail {

struct Node {
    Shape shape;
    std::shared_ptr<std::vector<double>> storage;
    DType dtype = DType::kFloat64;
    bool requires_grad = false;
    bool recorded = false;  // true for op outputs that kept their parents
    std::uint64_t id = 0;   // 0 when the node never entered a tape
    std::string op = "leaf";
    std::vector<Tensor> inputs;
    BackwardFn backward;

    static std::uint64_t next_id();

    static Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
    static const std::shared_ptr<Node>& unwrap(const Tensor& t) { return t.node_; }
};

}  // namespace mimic::ad::detail
