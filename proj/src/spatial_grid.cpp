// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/spatial_grid.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace rigsplat {

namespace {

using Candidate = std::pair<double, int>;  // (squared distance, index)

std::vector<int> take_k(std::vector<Candidate>& cands, int k) {
    std::sort(cands.begin(), cands.end());
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k && i < static_cast<int>(cands.size()); ++i) out.push_back(cands[i].second);
    return out;
}

}  // namespace

std::vector<int> knn_brute_force(std::span<const Vec3> points, const Vec3& query, int k) {
    if (points.empty()) throw GeometryError("knn on an empty point set");
    if (k < 1 || k > static_cast<int>(points.size())) throw GeometryError("knn: k out of range");
    std::vector<Candidate> cands;
    cands.reserve(points.size());
    for (int i = 0; i < static_cast<int>(points.size()); ++i)
        cands.emplace_back((points[i] - query).squaredNorm(), i);
    std::partial_sort(cands.begin(), cands.begin() + k, cands.end());
    cands.resize(k);
    return take_k(cands, k);
}

PointGrid::PointGrid(std::span<const Vec3> points, double cell_size)
    : points_(points), cell_size_(cell_size) {
    if (points.empty()) throw GeometryError("spatial grid over an empty point set");
    if (!(cell_size > 0.0)) throw GeometryError("spatial grid cell size must be positive");
    lo_ = cell_of(points[0]);
    hi_ = lo_;
    for (int i = 0; i < static_cast<int>(points.size()); ++i) {
        const auto c = cell_of(points[i]);
        lo_ = lo_.cwiseMin(c);
        hi_ = hi_.cwiseMax(c);
        cells_[pack(c)].push_back(i);
    }
}

Eigen::Vector3i PointGrid::cell_of(const Vec3& p) const {
    return {static_cast<int>(std::floor(p.x() / cell_size_)),
            static_cast<int>(std::floor(p.y() / cell_size_)),
            static_cast<int>(std::floor(p.z() / cell_size_))};
}

PointGrid::Key PointGrid::pack(const Eigen::Vector3i& c) {
    constexpr Key kOffset = 1 << 20;
    return ((static_cast<Key>(c.x()) + kOffset) << 42) | ((static_cast<Key>(c.y()) + kOffset) << 21) |
           (static_cast<Key>(c.z()) + kOffset);
}

std::vector<int> PointGrid::knn(const Vec3& query, int k) const {
    const int n = static_cast<int>(points_.size());
    if (k < 1 || k > n) throw GeometryError("knn: k out of range");
    if (!query.allFinite()) return knn_brute_force(points_, query, k);

    const Eigen::Vector3i center = cell_of(query);
    // shells beyond this radius cover the whole occupied box
    const int max_r = std::max({std::abs(center.x() - lo_.x()), std::abs(center.x() - hi_.x()),
                                std::abs(center.y() - lo_.y()), std::abs(center.y() - hi_.y()),
                                std::abs(center.z() - lo_.z()), std::abs(center.z() - hi_.z())});

    std::vector<Candidate> cands;
    for (int r = 0; r <= max_r; ++r) {
        const double side = 2.0 * r + 1.0;
        if (side * side * side > 8.0 * n + 64.0) return knn_brute_force(points_, query, k);
        for (int dx = -r; dx <= r; ++dx) {
            const int cx = center.x() + dx;
            if (cx < lo_.x() || cx > hi_.x()) continue;
            for (int dy = -r; dy <= r; ++dy) {
                const int cy = center.y() + dy;
                if (cy < lo_.y() || cy > hi_.y()) continue;
                const bool on_face = std::abs(dx) == r || std::abs(dy) == r;
                for (int dz = -r; dz <= r; dz += (on_face ? 1 : std::max(1, 2 * r))) {
                    const int cz = center.z() + dz;
                    if (cz < lo_.z() || cz > hi_.z()) continue;
                    const auto it = cells_.find(pack({cx, cy, cz}));
                    if (it == cells_.end()) continue;
                    for (int idx : it->second) cands.emplace_back((points_[idx] - query).squaredNorm(), idx);
                }
            }
        }
        if (static_cast<int>(cands.size()) >= k) {
            std::nth_element(cands.begin(), cands.begin() + (k - 1), cands.end());
            const double kth = cands[k - 1].first;
            const double bound = r * cell_size_;
            if (kth < bound * bound) break;
        }
    }
    return take_k(cands, k);
}

}  // namespace rigsplat
