// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/skinning.hpp"

#include "rigsplat/spatial_grid.hpp"

#include <cmath>
#include <optional>

namespace rigsplat {

std::vector<int> knn_vertices(const Vec3& point, const RiggedTemplate& tmpl, int k) {
    if (tmpl.vertices_canonical.empty()) throw GeometryError("knn on an empty template");
    if (tmpl.num_vertices() < kBruteForceKnnLimit)
        return knn_brute_force(tmpl.vertices_canonical, point, k);
    // one-off query; build_skin_field keeps its grid across queries
    return PointGrid(tmpl.vertices_canonical, 0.1).knn(point, k);
}

std::vector<double> tau_weights(const Vec3& point, std::span<const int> neighbors,
                                const RiggedTemplate& tmpl, double sigma) {
    if (!(sigma > 0.0)) throw GeometryError("tau weights need sigma > 0");
    if (neighbors.empty()) throw GeometryError("tau weights need at least one neighbor");
    const auto nearest_row = tmpl.blend_weights.row(neighbors[0]);
    const double denom = 2.0 * sigma * sigma;
    std::vector<double> tau(neighbors.size());
    double total = 0.0;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const int v = neighbors[i];
        const double dist = (tmpl.vertices_canonical[v] - point).norm();
        const double wdiff = (tmpl.blend_weights.row(v) - nearest_row).norm();
        tau[i] = std::exp(-(dist * wdiff) / denom);
        total += tau[i];
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        for (auto& t : tau) t = 1.0 / static_cast<double>(tau.size());
        return tau;
    }
    for (auto& t : tau) t /= total;
    return tau;
}

SkinnedPoint forward_skin_point(const Vec3& point, std::span<const int> neighbors,
                                std::span<const double> tau, const RiggedTemplate& tmpl,
                                const std::vector<AffineTransform3>& joint_xf) {
    AffineTransform3 m{Mat3::Zero(), Vec3::Zero()};
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        // per-vertex transform M_i = sum_j w_ij G_j
        AffineTransform3 mi{Mat3::Zero(), Vec3::Zero()};
        const auto row = tmpl.blend_weights.row(neighbors[i]);
        for (int j = 0; j < tmpl.num_joints(); ++j) {
            if (row[j] == 0.0) continue;
            mi.linear += row[j] * joint_xf[j].linear;
            mi.translation += row[j] * joint_xf[j].translation;
        }
        m.linear += tau[i] * mi.linear;
        m.translation += tau[i] * mi.translation;
    }
    return {m.apply(point), m};
}

SkinnedPoint forward_skin_point(const Vec3& point, std::span<const int> neighbors,
                                std::span<const double> tau, const RiggedTemplate& tmpl,
                                const Pose& pose) {
    return forward_skin_point(point, neighbors, tau, tmpl, joint_transforms(tmpl, pose));
}

Mat3 transport_covariance(const Mat3& sigma_c, const Mat3& m_linear) {
    const Mat3 s = m_linear * sigma_c * m_linear.transpose();
    return 0.5 * (s + s.transpose());
}

namespace {

SkinField allocate_field(const GaussianSet& gaussians, const RiggedTemplate& tmpl,
                         const SkinSettings& settings) {
    if (tmpl.vertices_canonical.empty()) throw GeometryError("skin field on an empty template");
    if (settings.k < 1 || settings.k > tmpl.num_vertices())
        throw GeometryError("skin field k out of range");
    if (!(settings.sigma > 0.0)) throw GeometryError("skin field sigma must be positive");
    SkinField field;
    field.k = settings.k;
    field.sigma = settings.sigma;
    field.generation = gaussians.generation;
    field.neighbor_indices.resize(gaussians.size() * settings.k);
    field.tau.resize(gaussians.size() * settings.k);
    field.joint_weights = MatX::Zero(static_cast<Eigen::Index>(gaussians.size()), tmpl.num_joints());
    return field;
}

void fill_row(SkinField& field, std::size_t g, const Vec3& x, const std::vector<int>& nbrs,
              const RiggedTemplate& tmpl) {
    const auto tau = tau_weights(x, nbrs, tmpl, field.sigma);
    for (int i = 0; i < field.k; ++i) {
        field.neighbor_indices[g * field.k + i] = nbrs[i];
        field.tau[g * field.k + i] = tau[i];
        field.joint_weights.row(static_cast<Eigen::Index>(g)) += tau[i] * tmpl.blend_weights.row(nbrs[i]);
    }
}

}  // namespace

SkinField build_skin_field(const GaussianSet& gaussians, const RiggedTemplate& tmpl,
                           const SkinSettings& settings) {
    SkinField field = allocate_field(gaussians, tmpl, settings);
    std::optional<PointGrid> grid;
    if (tmpl.num_vertices() >= kBruteForceKnnLimit) grid.emplace(tmpl.vertices_canonical, 2.0 * settings.sigma);
    const auto n = static_cast<std::int64_t>(gaussians.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t g = 0; g < n; ++g) {
        const Vec3& x = gaussians.gaussians[g].mean;
        const auto nbrs = grid ? grid->knn(x, settings.k)
                               : knn_brute_force(tmpl.vertices_canonical, x, settings.k);
        fill_row(field, static_cast<std::size_t>(g), x, nbrs, tmpl);
    }
    return field;
}

SkinField build_skin_field_serial(const GaussianSet& gaussians, const RiggedTemplate& tmpl,
                                  const SkinSettings& settings) {
    SkinField field = allocate_field(gaussians, tmpl, settings);
    for (std::size_t g = 0; g < gaussians.size(); ++g) {
        const Vec3& x = gaussians.gaussians[g].mean;
        fill_row(field, g, x, knn_brute_force(tmpl.vertices_canonical, x, settings.k), tmpl);
    }
    return field;
}

std::vector<AffineTransform3> blend_transforms(const SkinField& field,
                                               const std::vector<AffineTransform3>& joint_xf) {
    const auto n = static_cast<std::int64_t>(field.joint_weights.rows());
    const int nj = static_cast<int>(field.joint_weights.cols());
    if (static_cast<int>(joint_xf.size()) != nj)
        throw GeometryError("joint transform count does not match skin field");
    std::vector<AffineTransform3> out(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t g = 0; g < n; ++g) {
        AffineTransform3 m{Mat3::Zero(), Vec3::Zero()};
        for (int j = 0; j < nj; ++j) {
            const double w = field.joint_weights(g, j);
            if (w == 0.0) continue;
            m.linear += w * joint_xf[j].linear;
            m.translation += w * joint_xf[j].translation;
        }
        out[g] = m;
    }
    return out;
}

std::vector<AffineTransform3> blend_transforms_backward(
    const SkinField& field, std::span<const AffineTransform3> d_blended, int num_joints) {
    const auto n = static_cast<std::int64_t>(field.joint_weights.rows());
    std::vector<AffineTransform3> out(num_joints, AffineTransform3{Mat3::Zero(), Vec3::Zero()});
#pragma omp parallel for schedule(static)
    for (int j = 0; j < num_joints; ++j) {
        for (std::int64_t g = 0; g < n; ++g) {
            const double w = field.joint_weights(g, j);
            if (w == 0.0) continue;
            out[j].linear += w * d_blended[g].linear;
            out[j].translation += w * d_blended[g].translation;
        }
    }
    return out;
}

}  // namespace rigsplat
