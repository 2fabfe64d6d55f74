// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/geometry.hpp"
#include "rigsplat/mlp.hpp"
#include "rigsplat/skinning.hpp"

#include <span>
#include <string>
#include <vector>

namespace rigsplat {

/// Output parameterization of the pose-dependent field.
enum class DeformVariant { Translation, Rigid, Affine };

std::string to_string(DeformVariant v);
/// Accepts t/r/a (any case) or the full names.
DeformVariant parse_deform_variant(const std::string& s);

struct DeformConfig {
    DeformVariant variant = DeformVariant::Rigid;
    int hidden_layers = 4;
    int width = 128;
    int num_frequencies = 6;
};

/// Flattened (rodrigues(theta_j) - I) over all non-root joints, row-major 3x3
/// blocks in joint-index order.
struct PoseFeature {
    std::vector<double> values;
};

PoseFeature pose_feature(const RiggedTemplate& tmpl, const Pose& pose);
/// Pulls a gradient on the pose feature back onto joint rotations (root gets zero).
std::vector<Vec3> pose_feature_backward(const RiggedTemplate& tmpl, const Pose& pose,
                                        std::span<const double> d_feature);

class DeformMlp {
public:
    DeformMlp() = default;
    DeformMlp(const DeformConfig& config, int num_joints, std::uint64_t seed);

    [[nodiscard]] static int head_size(DeformVariant v);
    [[nodiscard]] const DeformConfig& config() const { return config_; }
    [[nodiscard]] DeformVariant variant() const { return config_.variant; }
    [[nodiscard]] const PositionalEncoding& encoding() const { return encoding_; }
    [[nodiscard]] int pose_feature_dim() const { return pose_dim_; }
    [[nodiscard]] Mlp& net() { return net_; }
    [[nodiscard]] const Mlp& net() const { return net_; }

    /// Raw head rows for a batch: x is N x 3, feature is 1 x F.
    [[nodiscard]] ad::Tensor forward_head(const ad::Tensor& x, const ad::Tensor& feature) const;

    /// Head row -> (A, t).
    [[nodiscard]] AffineTransform3 decode(std::span<const double> head) const;
    /// Gradient on the head row given dL/dA and dL/dt.
    void decode_backward(std::span<const double> head, const Mat3& d_linear, const Vec3& d_translation,
                         std::span<double> d_head) const;

    [[nodiscard]] DeformMlp clone() const;

private:
    DeformConfig config_;
    PositionalEncoding encoding_;
    int pose_dim_ = 0;
    Mlp net_;
};

/// Non-rigid transform at one canonical point for one pose.
AffineTransform3 nonrigid_transform(const Vec3& x_canonical, const RiggedTemplate& tmpl,
                                    const Pose& pose, const DeformMlp& mlp);

struct NonrigidResult {
    Vec3 point;
    Mat3 total_linear;
};

/// point <- A * point + t_nr; total_linear <- A * M.
NonrigidResult apply_nonrigid(const SkinnedPoint& skinned, const AffineTransform3& nr);

}  // namespace rigsplat
