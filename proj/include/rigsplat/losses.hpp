// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/image.hpp"

namespace rigsplat {

/// Scalar loss with its gradient w.r.t. the first (rendered) argument.
struct LossValue {
    double value = 0.0;
    Image grad;
};

/// Mean absolute difference over every pixel and channel.
LossValue loss_l1(const Image& render, const Image& target);

/// Multi-scale structural proxy: for each of three 2x average-pooling
/// levels, mean L1 of the pooled images plus mean L1 of their horizontal
/// and vertical finite differences. Both sides need width, height >= 8.
LossValue loss_perceptual(const Image& render, const Image& target);

inline constexpr double kDiceEpsilon = 1e-6;

/// 1 - (2 sum(p g) + eps) / (sum p + sum g + eps).
LossValue loss_dice(const Image& mask_render, const Image& mask_target);

/// Peak signal-to-noise ratio in dB for signals in [0, 1]; +inf when identical.
double psnr(const Image& a, const Image& b);

}  // namespace rigsplat
