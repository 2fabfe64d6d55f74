// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/pipeline.hpp"

#include <random>
#include <vector>

namespace rigsplat {

/// Gradient statistics gathered between density-control passes.
struct DensityStats {
    std::vector<double> screen_grad_sum;
    std::vector<Vec3> mean_grad_sum;
    std::vector<int> count;  // steps in which the Gaussian was on screen

    void reset(std::size_t n);
    void accumulate(const FrameGrads& grads, std::span<const int> visible);
    [[nodiscard]] double average(std::size_t i) const {
        return count[i] > 0 ? screen_grad_sum[i] / count[i] : 0.0;
    }
};

struct DensitySettings {
    double grad_threshold = 2e-4;
    double scale_threshold = 0.03;  // largest std-dev above which a Gaussian is split rather than cloned
    double prune_opacity = 5e-3;
    std::size_t max_gaussians = 200000;
    double split_factor = 1.6;
};

struct DensityResult {
    /// Row r of the new set came from old row sources[r]; -1 marks a new Gaussian.
    std::vector<int> sources;
    int cloned = 0;
    int split = 0;
    int pruned = 0;
    bool capped = false;  // stopped densifying at max_gaussians
    [[nodiscard]] bool changed() const { return cloned + split + pruned > 0; }
};

/// Clones small and splits large high-gradient Gaussians, prunes transparent
/// ones, bumps the generation and rebuilds the skin field when anything
/// changed.
DensityResult density_control(AvatarModel& model, const DensityStats& stats, const DensitySettings& settings,
                              const SkinSettings& skin, std::mt19937_64& rng);

}  // namespace rigsplat
