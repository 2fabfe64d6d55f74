// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/geometry.hpp"
#include "rigsplat/image.hpp"

#include <optional>
#include <span>
#include <vector>

namespace rigsplat {

/// A Gaussian after perspective projection.
struct SplattedGaussian {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();  // includes the low-pass floor
    double depth = 0.0;
    Vec3 color = Vec3::Zero();
    double alpha0 = 0.0;
    int source_index = 0;
};

struct RasterSettings {
    int tile_size = 16;
    double low_pass = 0.3;              // px^2 added to the projected covariance diagonal
    double near_plane = 0.01;
    double min_alpha = 1.0 / 255.0;     // contributions below are skipped; 0 disables the cutoff
    double max_alpha = 0.99;
    double min_transmittance = 1e-4;    // compositing stops before dropping below this
    bool inject_sign_error = false;     // flips d(alpha) in backward; used to exercise the check harness
};

/// Pixel (x, y) is sampled at (x + 0.5, y + 0.5).
struct RenderOutput {
    Image rgb;                          // H x W x 3
    Image alpha;                        // H x W x 1
    std::vector<double> contribution;   // per splat: sum over pixels of alpha_i * T_i
};

std::optional<SplattedGaussian> project_gaussian(const Vec3& mean3d, const Mat3& cov3d, const Camera& camera,
                                                 const RasterSettings& settings = {});

struct ProjectionGrad {
    Vec3 d_mean3d = Vec3::Zero();
    Mat3 d_cov3d = Mat3::Zero();
    Mat3 d_cam_rotation = Mat3::Zero();
    Vec3 d_cam_translation = Vec3::Zero();
};

/// Backward of project_gaussian for a splat that was not culled.
ProjectionGrad project_gaussian_backward(const Vec3& mean3d, const Mat3& cov3d, const Camera& camera,
                                         const Vec2& d_mean2d, const Mat2& d_cov2d);

/// Tile-based front-to-back compositing, parallel over tiles.
RenderOutput render(std::span<const SplattedGaussian> splats, const Camera& camera,
                    const RasterSettings& settings = {});

/// Serial per-pixel reference: every splat evaluated at every pixel, full
/// per-pixel depth sort, no tiling.
RenderOutput render_brute_force(std::span<const SplattedGaussian> splats, const Camera& camera,
                                const RasterSettings& settings = {});

struct SplatGrad {
    Vec2 d_mean2d = Vec2::Zero();
    Mat2 d_cov2d = Mat2::Zero();  // symmetric; entries treated independently
    double d_alpha0 = 0.0;
    Vec3 d_color = Vec3::Zero();
};

/// Gradients per splat from dL/d rgb (H x W x 3) and optionally dL/d alpha
/// (H x W x 1). Recomputes the forward compositing state per pixel.
std::vector<SplatGrad> render_backward(std::span<const SplattedGaussian> splats, const Camera& camera,
                                       const Image& d_rgb, const Image* d_alpha,
                                       const RasterSettings& settings = {});

/// Soft silhouette: every splat rendered white, red channel returned.
Image render_mask(std::span<const SplattedGaussian> splats, const Camera& camera,
                  const RasterSettings& settings = {});

/// Geometry/opacity gradients of render_mask; color gradients are zero.
std::vector<SplatGrad> render_mask_backward(std::span<const SplattedGaussian> splats, const Camera& camera,
                                            const Image& d_mask, const RasterSettings& settings = {});

}  // namespace rigsplat
