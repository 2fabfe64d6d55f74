// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/pipeline.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace rigsplat {

struct CheckComponent {
    std::string name;
    double max_error = 0.0;  // relative for gradients, absolute for equivalence checks
    double tolerance = 0.0;
    bool passed = false;
    std::string detail;
};

struct CheckReport {
    std::vector<CheckComponent> components;
    [[nodiscard]] bool passed() const;
    [[nodiscard]] std::string format() const;
};

struct CheckOptions {
    std::uint64_t seed = 1;
    int oracle_scenes = 20;
    int skin_seeds = 3;
    int skin_points = 2000;
    bool inject_compositing_fault = false;
};

CheckReport run_checks(const CheckOptions& options = {});

// Individual components, also used by the test suites.

CheckComponent check_tape_ops(std::uint64_t seed);
/// 3 splats, 16x16, every splat parameter against central differences (h = 1e-4).
CheckComponent check_rasterizer_backward(std::uint64_t seed, bool inject_fault = false);
CheckComponent check_projection_backward(std::uint64_t seed);
/// d(loss)/d(canonical mean) through skinning, deformation, color field and rendering.
CheckComponent check_pipeline_mean_gradient(std::uint64_t seed, DeformVariant variant = DeformVariant::Rigid);
/// Explicit render term plus J^T dL/dC against the shared-leaf reverse pass.
CheckComponent check_color_term_consistency(std::uint64_t seed);
CheckComponent check_tile_oracle(std::uint64_t seed, int scenes);
CheckComponent check_skinning_invariants(std::uint64_t seed, int seeds, int points);
CheckComponent check_deform_identity(std::uint64_t seed, int probes);

/// Random projected splats in a w x h image, distinct depths and source indices.
std::vector<SplattedGaussian> random_splats(std::mt19937_64& rng, int n, int width, int height);
/// Pinhole camera whose image plane matches a splat scene.
Camera pixel_camera(int width, int height);

/// Small posed avatar with randomized (non-identity) networks and a random target.
struct TinyScene {
    AvatarModel model;
    Pose pose;
    Camera camera;
    Image target;
    Image mask;
};
TinyScene make_tiny_scene(std::uint64_t seed, int n_gaussians, int size, DeformVariant variant = DeformVariant::Rigid);

/// L1 + 0.1 perceptual + 0.1 Dice on a tiny scene; fills `grads` when given.
double tiny_scene_loss(const TinyScene& scene, const ForwardOptions& options, FrameGrads* grads = nullptr);

/// Rasterizer settings that keep the image a smooth function of every splat
/// parameter (no alpha cutoff, no early termination).
RasterSettings smooth_raster_settings();

}  // namespace rigsplat
