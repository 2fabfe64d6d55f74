// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/color_field.hpp"
#include "rigsplat/deform.hpp"
#include "rigsplat/geometry.hpp"
#include "rigsplat/rasterizer.hpp"
#include "rigsplat/skinning.hpp"

#include <vector>

namespace rigsplat {

/// Learnable per-frame offsets on the supplied pose and camera.
///
/// Joint and root rotations are corrected additively in axis-angle. The
/// camera becomes R' = rodrigues(camera_rotation) * R, t' = t + camera_translation.
struct FrameCorrection {
    std::vector<Vec3> joint_rotations;
    Vec3 root_rotation = Vec3::Zero();
    Vec3 root_translation = Vec3::Zero();
    Vec3 camera_rotation = Vec3::Zero();
    Vec3 camera_translation = Vec3::Zero();

    static FrameCorrection zero(int num_joints);
    /// 9 + 3 * |J| scalars: joints, root rotation, root translation, camera rotation, camera translation.
    [[nodiscard]] std::vector<double> flatten() const;
    void unflatten(std::span<const double> v);
};

Pose corrected_pose(const Pose& pose, const FrameCorrection& c);
Camera corrected_camera(const Camera& camera, const FrameCorrection& c);

/// Everything needed to pose and render one avatar.
struct AvatarModel {
    RiggedTemplate tmpl;
    GaussianSet gaussians;
    SkinField skin;
    DeformMlp deform;
    ColorMlp color;
    bool use_color_field = true;

    /// Rebuilds the skin field for the current generation.
    void rebuild_skin(const SkinSettings& settings);
};

struct ForwardOptions {
    RasterSettings raster;
    /// Both fields read canonical positions through one tape leaf, so the
    /// reverse pass yields the complete mean gradient directly. When false the
    /// color field gets its own leaf and the two contributions are kept apart.
    bool shared_position_leaf = true;
    /// Record a tape so backward() can be called.
    bool record_tape = true;
    /// Use precomputed colors instead of querying the field.
    const ColorCache* color_cache = nullptr;
};

/// Forward pass state retained for backward.
struct ForwardState {
    Pose pose;
    Camera camera;
    ForwardOptions options;

    std::vector<AffineTransform3> joint_xf;
    std::vector<AffineTransform3> skin_xf;  // M_g, t_g
    std::vector<AffineTransform3> nonrigid;  // A_g, t_NR,g
    std::vector<Vec3> skinned;               // M x + t
    std::vector<Vec3> observed;              // A (M x + t) + t_NR
    std::vector<Mat3> cov_canonical;
    std::vector<Mat3> cov_observed;
    std::vector<Vec3> colors;
    std::vector<double> alpha0;

    std::vector<SplattedGaussian> splats;
    std::vector<int> splat_to_gaussian;
    RenderOutput render;

    ad::Tensor x_deform;  // N x 3 leaf
    ad::Tensor x_color;   // N x 3 leaf (same handle when shared)
    ad::Tensor feature;   // 1 x F leaf
    ad::Tensor head;      // N x head_size
    ad::Tensor color_out; // N x 3 (field only)
};

struct FrameGrads {
    std::vector<Vec3> mean;         // complete dL/dx
    std::vector<Vec3> mean_render;  // dL/dx without the color-field term
    std::vector<Vec3> log_scale;
    std::vector<Vec4> rotation;
    std::vector<double> opacity_logit;
    std::vector<Vec3> color;        // dL/dC per Gaussian
    std::vector<double> screen_grad;  // |dL/d mean2d| in normalized device units, for densification
    PoseGrad pose;
    Mat3 camera_rotation = Mat3::Zero();
    Vec3 camera_translation = Vec3::Zero();
};

/// Skin, deform, color, project and render one frame.
ForwardState forward(const AvatarModel& model, const Pose& pose, const Camera& camera,
                     const ForwardOptions& options = {});

/// Reverse pass from image gradients. MLP parameter gradients accumulate into
/// the network tensors; everything else is returned.
FrameGrads backward(const AvatarModel& model, ForwardState& state, const Image& d_rgb, const Image* d_alpha);

/// Pulls pose/camera gradients back onto a frame correction.
FrameCorrection correction_gradient(const FrameGrads& grads, const Camera& base_camera,
                                    const FrameCorrection& correction);

}  // namespace rigsplat
