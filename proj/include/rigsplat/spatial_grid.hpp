// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/geometry.hpp"

#include <span>
#include <unordered_map>
#include <vector>

namespace rigsplat {

/// k nearest points by exhaustive sort; ties go to the lower index.
std::vector<int> knn_brute_force(std::span<const Vec3> points, const Vec3& query, int k);

/// Uniform hash grid over a static point set. Answers exact k-nearest queries
/// with the same tie-breaking as knn_brute_force.
class PointGrid {
public:
    PointGrid(std::span<const Vec3> points, double cell_size);

    [[nodiscard]] std::vector<int> knn(const Vec3& query, int k) const;
    [[nodiscard]] double cell_size() const { return cell_size_; }

private:
    using Key = std::int64_t;

    [[nodiscard]] Eigen::Vector3i cell_of(const Vec3& p) const;
    static Key pack(const Eigen::Vector3i& c);

    std::span<const Vec3> points_;
    double cell_size_;
    Eigen::Vector3i lo_, hi_;
    std::unordered_map<Key, std::vector<int>> cells_;
};

}  // namespace rigsplat
