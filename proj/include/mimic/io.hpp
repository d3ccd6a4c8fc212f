// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Image and checkpoint files.
//
// TPL1 checkpoint, all integers little-endian u32 unless noted:
//   "TPL1" | C | R_coarse | R_resid | d_w | dtype (u8: 0 = f64, 1 = f32)
//   | factor | hidden | depth | color_dim | aware3d (u8)
//   | P_xy | P_yz | P_zx                (coarse planes, C x R x R each)
//   | decoder W0 b0 W1 b1 ...           (W is out x in)
//   | w                                  (d_w)
//   | S^3D blocks: kernel, affine W, affine b per block
//   | aware3d convs (xy, yz, zx) in the same layout, when present
// Reals are IEEE little-endian in the header's dtype.

#pragma once

#include "mimic/student.hpp"
#include "mimic/tensor.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace mimic {

/// Malformed or unreadable input file (bad magic, truncated, inconsistent header).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 8-bit RGB PNG; values are clamped to [0, 1] and rounded, no transfer curve applied.
void write_png(const std::string& path, const ad::Tensor& image);
ad::Tensor read_png(const std::string& path);

/// Colour ("PF", H x W x 3) or greyscale ("Pf", H x W) float PFM, little-endian,
/// rows stored bottom to top as the format requires.
void write_pfm(const std::string& path, const ad::Tensor& image);
void write_pfm(const std::string& path, std::span<const double> values, std::size_t height, std::size_t width);
ad::Tensor read_pfm(const std::string& path);

void save_checkpoint(const std::string& path, const StudentField& student, ad::DType dtype = ad::DType::kFloat64);
StudentField load_checkpoint(const std::string& path);

}  // namespace mimic
