// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mimic/tensor.hpp"

namespace mimic {

struct FieldSample {
    ad::Tensor color;  // N x 3, in [0, 1]
    ad::Tensor sigma;  // N, >= 0
};

/// Anything the renderer can march through: the student or an analytic scene.
/// Implementations must be safe to query concurrently.
class RadianceField {
public:
    virtual ~RadianceField() = default;
    /// points: N x 3 world positions (constants).
    virtual FieldSample query(const ad::Tensor& points) const = 0;
};

}  // namespace mimic
