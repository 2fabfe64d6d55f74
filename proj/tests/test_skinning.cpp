// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/skinning.hpp"
#include "rigsplat/spatial_grid.hpp"
#include "rigsplat/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace rigsplat;

namespace {

RiggedTemplate random_mesh(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    RiggedTemplate t;
    t.joints = {Vec3::Zero(), Vec3(0, 0.5, 0)};
    t.parent = {-1, 0};
    t.blend_weights = MatX::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
        t.vertices_canonical.emplace_back(u(rng), u(rng), u(rng));
        const double w = 0.5 * (u(rng) + 1.0);
        t.blend_weights(i, 0) = w;
        t.blend_weights(i, 1) = 1.0 - w;
    }
    return t;
}

}  // namespace

TEST(Knn, VertexItselfIsNearest) {
    const auto t = random_mesh(100, 1);
    EXPECT_EQ(knn_vertices(t.vertices_canonical[17], t, 1), std::vector<int>{17});
}

TEST(Knn, AllVertices) {
    const auto t = random_mesh(30, 2);
    auto idx = knn_vertices(Vec3(0.1, 0.2, 0.3), t, 30);
    std::sort(idx.begin(), idx.end());
    std::vector<int> all(30);
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(idx, all);
}

TEST(Knn, MatchesExhaustiveSort) {
    const auto t = random_mesh(100, 3);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int q = 0; q < 50; ++q) {
        const Vec3 p(u(rng), u(rng), u(rng));
        std::vector<int> order(100);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double da = (t.vertices_canonical[a] - p).squaredNorm();
            const double db = (t.vertices_canonical[b] - p).squaredNorm();
            return da != db ? da < db : a < b;
        });
        order.resize(4);
        EXPECT_EQ(knn_vertices(p, t, 4), order);
    }
}

TEST(Knn, TiesBreakByLowerIndex) {
    std::vector<Vec3> pts = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 2)};
    EXPECT_EQ(knn_brute_force(pts, Vec3::Zero(), 2), (std::vector<int>{0, 1}));
}

TEST(Knn, GridMatchesBruteForce) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Vec3> pts(3000);
    for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
    const PointGrid grid(pts, 0.1);
    for (int q = 0; q < 200; ++q) {
        const Vec3 p(1.5 * u(rng), 1.5 * u(rng), 1.5 * u(rng));
        EXPECT_EQ(grid.knn(p, 6), knn_brute_force(pts, p, 6));
    }
}

TEST(Tau, SingleNeighbor) {
    const auto t = random_mesh(20, 5);
    const auto w = tau_weights(t.vertices_canonical[3], std::vector<int>{3}, t, 0.05);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0], 1.0);
}

TEST(Tau, SymmetricNeighbors) {
    RiggedTemplate t;
    t.joints = {Vec3::Zero()};
    t.parent = {-1};
    t.vertices_canonical = {Vec3(-0.1, 0, 0), Vec3(0.1, 0, 0)};
    t.blend_weights = MatX::Ones(2, 1);
    const auto w = tau_weights(Vec3::Zero(), std::vector<int>{0, 1}, t, 0.1);
    EXPECT_DOUBLE_EQ(w[0], 0.5);
    EXPECT_DOUBLE_EQ(w[1], 0.5);
}

TEST(Tau, DistanceTimesWeightDistanceKernel) {
    // distances 0.1, 0.2, 0.3; blend-weight distances 0, 0.5, 1.0 from the nearest row
    RiggedTemplate t;
    t.joints = {Vec3::Zero(), Vec3(1, 0, 0)};
    t.parent = {-1, 0};
    t.vertices_canonical = {Vec3(0.1, 0, 0), Vec3(0, 0.2, 0), Vec3(0, 0, 0.3)};
    t.blend_weights = MatX::Zero(3, 2);
    const double c = 0.5 / std::sqrt(2.0);
    t.blend_weights.row(0) << 0.5, 0.5;
    t.blend_weights.row(1) << 0.5 + c, 0.5 - c;
    t.blend_weights.row(2) << 0.5 + 2 * c, 0.5 - 2 * c;
    const double sigma = 0.1;
    const auto w = tau_weights(Vec3::Zero(), std::vector<int>{0, 1, 2}, t, sigma);
    const double r0 = 1.0, r1 = std::exp(-0.2 * 0.5 / (2 * sigma * sigma)), r2 = std::exp(-0.3 * 1.0 / (2 * sigma * sigma));
    EXPECT_NEAR(r1, std::exp(-5.0), 1e-15);
    EXPECT_NEAR(r2, std::exp(-15.0), 1e-15);
    const double s = r0 + r1 + r2;
    EXPECT_NEAR(w[0], r0 / s, 1e-15);
    EXPECT_NEAR(w[1], r1 / s, 1e-15);
    EXPECT_NEAR(w[2], r2 / s, 1e-15);
}

TEST(Tau, FarQueryStaysNormalized) {
    RiggedTemplate t;
    t.joints = {Vec3::Zero(), Vec3(1, 0, 0)};
    t.parent = {-1, 0};
    t.vertices_canonical = {Vec3(50, 0, 0), Vec3(0, 60, 0)};
    t.blend_weights = MatX::Zero(2, 2);
    t.blend_weights.row(0) << 1, 0;
    t.blend_weights.row(1) << 0, 1;
    // the nearest term is 1 by construction, so shift the query off both vertices
    const auto w = tau_weights(Vec3(0, 0, 0), std::vector<int>{0, 1}, t, 1e-3);
    EXPECT_DOUBLE_EQ(w[0] + w[1], 1.0);
}

TEST(ForwardSkin, RestPoseIsIdentity) {
    const auto t = make_synthetic_rig(0);
    const auto xf = joint_transforms(t, Pose::rest(t.num_joints()));
    const Vec3 p(0.1, 1.2, 0.05);
    const auto nb = knn_vertices(p, t, 4);
    const auto tau = tau_weights(p, nb, t, 0.05);
    const auto s = forward_skin_point(p, nb, tau, t, xf);
    EXPECT_EQ(s.observed, p);
    EXPECT_EQ(s.transform.linear, Mat3::Identity());
}

TEST(ForwardSkin, RigidRootMotion) {
    const auto t = make_synthetic_rig(0);
    Pose pose = Pose::rest(t.num_joints());
    pose.root_rotation = Vec3(0.3, -0.5, 0.2);
    pose.root_translation = Vec3(0.4, -0.1, 1.0);
    const Mat3 r = rodrigues(pose.root_rotation);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < 50; ++i) {
        const Vec3 p = t.vertices_canonical[i * 7] + Vec3(u(rng), u(rng), u(rng)) * 0.1;
        const auto nb = knn_vertices(p, t, 4);
        const auto s = forward_skin_point(p, nb, tau_weights(p, nb, t, 0.05), t, pose);
        EXPECT_LT((s.observed - (r * p + pose.root_translation)).norm(), 1e-12);
    }
}

TEST(ForwardSkin, PointFollowsItsJointPivot) {
    RiggedTemplate t;
    t.joints = {Vec3(0, 0, 0), Vec3(0, 1, 0)};
    t.parent = {-1, 0};
    t.vertices_canonical = {Vec3(0, 0, 0), Vec3(0, 2, 0)};
    t.blend_weights = MatX::Zero(2, 2);
    t.blend_weights(0, 0) = 1;
    t.blend_weights(1, 1) = 1;
    Pose pose = Pose::rest(2);
    pose.joint_rotations[1] = Vec3(M_PI / 2, 0, 0);
    const Vec3 p(0, 1.8, 0.1);
    const auto s = forward_skin_point(p, std::vector<int>{1}, std::vector<double>{1.0}, t, pose);
    const Vec3 pivot(0, 1, 0);
    const Vec3 expect = rodrigues(pose.joint_rotations[1]) * (p - pivot) + pivot;
    EXPECT_LT((s.observed - expect).norm(), 1e-15);
}

TEST(TransportCovariance, Cases) {
    const Mat3 s = Vec3(4, 1, 1).asDiagonal();
    EXPECT_EQ(transport_covariance(s, Mat3::Identity()), s);
    const Mat3 rz = rodrigues(Vec3(0, 0, M_PI / 2));
    EXPECT_LT((transport_covariance(s, rz) - Mat3(Vec3(1, 4, 1).asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
    const Mat3 iso = 0.09 * Mat3::Identity();
    const Mat3 r = rodrigues(Vec3(0.4, -1.1, 0.7));
    EXPECT_LT((transport_covariance(iso, r) - iso).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(SkinField, GaussianAtVertex) {
    const auto t = make_synthetic_rig(0);
    GaussianSet set;
    set.gaussians.resize(1);
    set.gaussians[0].mean = t.vertices_canonical[100];
    const auto f = build_skin_field(set, t, {1, 0.05});
    EXPECT_EQ(f.neighbors(0)[0], 100);
    EXPECT_EQ(f.weights(0)[0], 1.0);
}

TEST(SkinField, RebuiltAfterGenerationChange) {
    const auto t = make_synthetic_rig(0);
    std::mt19937_64 rng(1);
    auto set = initialize(t, 500, rng).gaussians;
    auto f = build_skin_field(set, t, {});
    set.gaussians.push_back(set.gaussians.front());
    ++set.generation;
    EXPECT_NE(f.generation, set.generation);
    f = build_skin_field(set, t, {});
    EXPECT_EQ(f.generation, set.generation);
    EXPECT_EQ(f.size(), set.size());
}

TEST(SkinField, PartitionOfUnityOnSampledRig) {
    const auto t = make_synthetic_rig(0);
    std::mt19937_64 rng(11);
    const auto set = initialize(t, 20000, rng).gaussians;
    const auto f = build_skin_field(set, t, {});
    ASSERT_EQ(f.size(), 20000u);
    for (std::size_t g = 0; g < f.size(); ++g) {
        double s = 0;
        for (double w : f.weights(g)) {
            EXPECT_GE(w, 0.0);
            s += w;
        }
        ASSERT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(SkinField, ParallelMatchesSerialReference) {
    const auto t = make_synthetic_rig(3);
    std::mt19937_64 rng(12);
    auto set = initialize(t, 3000, rng).gaussians;
    std::normal_distribution<double> n(0.0, 0.05);
    for (auto& g : set.gaussians) g.mean += Vec3(n(rng), n(rng), n(rng));
    const auto a = build_skin_field(set, t, {});
    const auto b = build_skin_field_serial(set, t, {});
    EXPECT_EQ(a.neighbor_indices, b.neighbor_indices);
    EXPECT_EQ(a.tau, b.tau);
}

TEST(BlendTransforms, BackwardMatchesFiniteDifferences) {
    const auto t = make_synthetic_rig(0);
    std::mt19937_64 rng(2);
    const auto set = initialize(t, 20, rng).gaussians;
    const auto f = build_skin_field(set, t, {});
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<AffineTransform3> xf(t.num_joints()), d(set.size());
    for (auto& x : xf) {
        for (int i = 0; i < 9; ++i) x.linear(i / 3, i % 3) = u(rng);
        x.translation = Vec3(u(rng), u(rng), u(rng));
    }
    for (auto& x : d) {
        for (int i = 0; i < 9; ++i) x.linear(i / 3, i % 3) = u(rng);
        x.translation = Vec3(u(rng), u(rng), u(rng));
    }
    const auto g = blend_transforms_backward(f, d, t.num_joints());
    // blend is linear in the joint transforms: the gradient is exact
    for (int j = 0; j < t.num_joints(); ++j) {
        auto bumped = xf;
        bumped[j].translation[1] += 1.0;
        bumped[j].linear(2, 0) += 1.0;
        const auto a = blend_transforms(f, xf), b = blend_transforms(f, bumped);
        double diff = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            diff += ((b[i].linear - a[i].linear).array() * d[i].linear.array()).sum() +
                    (b[i].translation - a[i].translation).dot(d[i].translation);
        EXPECT_NEAR(diff, g[j].translation[1] + g[j].linear(2, 0), 1e-12);
    }
}
