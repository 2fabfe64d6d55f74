// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/geometry.hpp"

#include <span>
#include <vector>

namespace rigsplat {

struct SkinSettings {
    int k = 4;
    double sigma = 0.05;
};

/// Pose-independent virtual-joint weights for every Gaussian of a set.
///
/// Row g holds the k nearest template vertices of Gaussian g and their
/// normalized weights. `joint_weights` is the same field collapsed onto the
/// skeleton: row g equals sum_i tau_gi * blend_weights.row(neighbor_gi), so
/// that M(theta, x) = sum_j joint_weights(g, j) * G_j(theta).
struct SkinField {
    std::vector<int> neighbor_indices;  // N * k
    std::vector<double> tau;            // N * k
    MatX joint_weights;                 // N x |J|
    int k = 0;
    double sigma = 0.0;
    std::uint64_t generation = 0;

    [[nodiscard]] std::size_t size() const { return k == 0 ? 0 : tau.size() / k; }
    [[nodiscard]] std::span<const int> neighbors(std::size_t g) const {
        return {neighbor_indices.data() + g * k, static_cast<std::size_t>(k)};
    }
    [[nodiscard]] std::span<const double> weights(std::size_t g) const {
        return {tau.data() + g * k, static_cast<std::size_t>(k)};
    }
};

/// Vertices with fewer than this many entries are searched exhaustively.
inline constexpr int kBruteForceKnnLimit = 512;

std::vector<int> knn_vertices(const Vec3& point, const RiggedTemplate& tmpl, int k);

/// Normalized weights over `neighbors` (neighbors[0] must be the nearest).
/// Falls back to uniform weights if every raw weight underflows.
std::vector<double> tau_weights(const Vec3& point, std::span<const int> neighbors,
                                const RiggedTemplate& tmpl, double sigma);

struct SkinnedPoint {
    Vec3 observed;
    AffineTransform3 transform;
};

/// Forward skinning of one canonical point through its virtual joints.
SkinnedPoint forward_skin_point(const Vec3& point, std::span<const int> neighbors,
                                std::span<const double> tau, const RiggedTemplate& tmpl,
                                const std::vector<AffineTransform3>& joint_xf);
SkinnedPoint forward_skin_point(const Vec3& point, std::span<const int> neighbors,
                                std::span<const double> tau, const RiggedTemplate& tmpl,
                                const Pose& pose);

/// M Sigma M^T, symmetrized.
Mat3 transport_covariance(const Mat3& sigma_c, const Mat3& m_linear);

/// Builds the field in parallel over Gaussians using a hash grid for KNN.
SkinField build_skin_field(const GaussianSet& gaussians, const RiggedTemplate& tmpl,
                           const SkinSettings& settings);

/// Serial reference: exhaustive KNN, one Gaussian at a time.
SkinField build_skin_field_serial(const GaussianSet& gaussians, const RiggedTemplate& tmpl,
                                  const SkinSettings& settings);

/// Per-Gaussian blended transform M(theta, x_g), t(theta, x_g).
std::vector<AffineTransform3> blend_transforms(const SkinField& field,
                                               const std::vector<AffineTransform3>& joint_xf);

/// Accumulates dL/dG_j from per-Gaussian dL/dM_g.
std::vector<AffineTransform3> blend_transforms_backward(
    const SkinField& field, std::span<const AffineTransform3> d_blended, int num_joints);

}  // namespace rigsplat
