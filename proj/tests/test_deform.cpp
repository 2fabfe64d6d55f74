// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/check.hpp"
#include "rigsplat/deform.hpp"
#include "rigsplat/optim.hpp"
#include "rigsplat/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rigsplat;

TEST(Encoding, AtOrigin) {
    const PositionalEncoding enc{4, true};
    const auto e = encode_position(Vec3::Zero(), enc);
    ASSERT_EQ(e.size(), enc.output_dim());
    for (int i = 0; i < 3; ++i) EXPECT_EQ(e[i], 0.0);
    for (int f = 0; f < 4; ++f)
        for (int a = 0; a < 3; ++a) {
            EXPECT_EQ(e[3 + 6 * f + a], 0.0);
            EXPECT_EQ(e[3 + 6 * f + 3 + a], 1.0);
        }
}

TEST(Encoding, NoFrequenciesReturnsInput) {
    const Vec3 x(0.1, -0.7, 2.0);
    const auto e = encode_position(x, {0, true});
    ASSERT_EQ(e.size(), 3);
    EXPECT_EQ(Vec3(e[0], e[1], e[2]), x);
}

TEST(Encoding, LowestFrequency) {
    const auto e = encode_position(Vec3(0.5, 0, 0), {2, true});
    EXPECT_NEAR(e[3], 1.0, 1e-15);  // sin(pi/2)
    EXPECT_NEAR(e[6], 0.0, 1e-15);  // cos(pi/2)
}

TEST(Encoding, JacobianMatchesFiniteDifferences) {
    const PositionalEncoding enc{5, true};
    const Vec3 x(0.3, -0.2, 0.7);
    const auto j = encode_position_jacobian(x, enc);
    for (int a = 0; a < 3; ++a) {
        Vec3 p = x, m = x;
        p[a] += 1e-6;
        m[a] -= 1e-6;
        const Eigen::VectorXd fd = (encode_position(p, enc) - encode_position(m, enc)) / 2e-6;
        EXPECT_LT((j.col(a) - fd).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(PoseFeature, RestIsZero) {
    const auto t = make_synthetic_rig(0);
    const auto f = pose_feature(t, Pose::rest(t.num_joints()));
    EXPECT_EQ(f.values.size(), 9u * (t.num_joints() - 1));
    for (double v : f.values) EXPECT_EQ(v, 0.0);
}

TEST(PoseFeature, QuarterTurnBlock) {
    const auto t = make_synthetic_rig(0);
    Pose p = Pose::rest(t.num_joints());
    p.joint_rotations[kHead] = Vec3(0, 0, M_PI / 2);
    const auto f = pose_feature(t, p);
    const double expect[9] = {-1, -1, 0, 1, -1, 0, 0, 0, 0};
    const int block = kHead - 1;  // root has no block
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(f.values[9 * block + i], expect[i], 1e-15);
}

TEST(PoseFeature, BackwardMatchesFiniteDifferences) {
    const auto t = make_synthetic_rig(0);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    Pose p = Pose::rest(t.num_joints());
    for (auto& r : p.joint_rotations) r = Vec3(u(rng), u(rng), u(rng));
    std::vector<double> w(9 * (t.num_joints() - 1));
    for (auto& v : w) v = u(rng);
    const auto g = pose_feature_backward(t, p, w);
    auto loss = [&](const Pose& q) {
        const auto f = pose_feature(t, q);
        double s = 0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * f.values[i];
        return s;
    };
    EXPECT_EQ(g[0], Vec3::Zero());
    for (int j = 1; j < t.num_joints(); ++j)
        for (int a = 0; a < 3; ++a) {
            Pose pp = p, pm = p;
            pp.joint_rotations[j][a] += 1e-6;
            pm.joint_rotations[j][a] -= 1e-6;
            EXPECT_NEAR(g[j][a], (loss(pp) - loss(pm)) / 2e-6, 1e-8);
        }
}

TEST(DeformMlp, IdentityAtInit) {
    const auto c = check_deform_identity(9, 1000);
    EXPECT_TRUE(c.passed) << c.detail;
}

TEST(DeformMlp, RigidHeadOffsetConvention) {
    const DeformMlp m({DeformVariant::Rigid, 1, 8, 2}, 3, 0);
    const std::vector<double> head = {0, 0, 0, 0, 0.1, 0, 0};
    const auto a = m.decode(head);
    EXPECT_EQ(a.linear, Mat3::Identity());
    EXPECT_EQ(a.translation, Vec3(0.1, 0, 0));
}

TEST(DeformMlp, HeadSizes) {
    EXPECT_EQ(DeformMlp::head_size(DeformVariant::Translation), 3);
    EXPECT_EQ(DeformMlp::head_size(DeformVariant::Rigid), 7);
    EXPECT_EQ(DeformMlp::head_size(DeformVariant::Affine), 12);
    EXPECT_EQ(parse_deform_variant("t"), DeformVariant::Translation);
    EXPECT_EQ(parse_deform_variant("A"), DeformVariant::Affine);
    EXPECT_THROW(parse_deform_variant("q"), std::invalid_argument);
}

TEST(DeformMlp, DecodeBackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto v : {DeformVariant::Translation, DeformVariant::Rigid, DeformVariant::Affine}) {
        const DeformMlp m({v, 1, 8, 2}, 3, 0);
        std::vector<double> head(DeformMlp::head_size(v));
        for (auto& h : head) h = u(rng);
        Mat3 dl;
        for (int i = 0; i < 9; ++i) dl(i / 3, i % 3) = u(rng);
        const Vec3 dt(u(rng), u(rng), u(rng));
        std::vector<double> g(head.size());
        m.decode_backward(head, dl, dt, g);
        auto loss = [&](std::span<const double> h) {
            const auto a = m.decode(h);
            return (a.linear.array() * dl.array()).sum() + a.translation.dot(dt);
        };
        EXPECT_TRUE(finite_difference_check(loss, head, g, 1e-6, 1e-6).passed()) << to_string(v);
    }
}

TEST(DeformMlp, WeightGradientsMatchFiniteDifferences) {
    // head rows for a batch of points; loss = weighted sum of the rows
    const auto t = make_synthetic_rig(0);
    DeformMlp m({DeformVariant::Affine, 2, 16, 3}, t.num_joints(), 5);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& p : m.net().parameters())
        for (double& v : p.values()) v = 0.3 * u(rng);
    Pose pose = Pose::rest(t.num_joints());
    for (auto& r : pose.joint_rotations) r = Vec3(0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng));
    const auto feat = pose_feature(t, pose);
    std::vector<double> xs(12);
    for (auto& v : xs) v = u(rng);
    std::vector<double> w(4 * 12);
    for (auto& v : w) v = u(rng);
    auto run = [&]() {
        auto x = ad::Tensor::from({4, 3}, xs);
        auto f = ad::Tensor::from({1, static_cast<std::int64_t>(feat.values.size())}, feat.values);
        auto head = m.forward_head(x, f);
        return ad::sum(ad::mul(head, ad::Tensor::from({4, 12}, w)));
    };
    m.net().zero_grad();
    ad::backward(run());
    for (std::size_t k = 0; k < m.net().parameters().size(); ++k) {
        auto& p = m.net().parameters()[k];
        const std::vector<double> analytic(p.grad().begin(), p.grad().end());
        const std::vector<double> start(p.values().begin(), p.values().end());
        auto f = [&](std::span<const double> q) {
            std::copy(q.begin(), q.end(), p.values().begin());
            const double v = run().item();
            std::copy(start.begin(), start.end(), p.values().begin());
            return v;
        };
        const auto r = finite_difference_check(f, start, analytic, 1e-5, 1e-4);
        EXPECT_TRUE(r.passed()) << "parameter tensor " << k << " max rel " << r.max_rel_error;
    }
}

TEST(NonrigidTransport, Cases) {
    const Mat3 s = Vec3(4, 1, 1).asDiagonal();
    const SkinnedPoint sp{Vec3(1, 2, 3), {Mat3::Identity(), Vec3::Zero()}};
    const auto same = apply_nonrigid(sp, AffineTransform3::identity());
    EXPECT_EQ(same.point, sp.observed);
    EXPECT_EQ(same.total_linear, Mat3::Identity());

    const Mat3 rz = rodrigues(Vec3(0, 0, M_PI / 2));
    const auto r = apply_nonrigid(sp, {rz, Vec3::Zero()});
    EXPECT_LT((transport_covariance(s, r.total_linear) - Mat3(Vec3(1, 4, 1).asDiagonal())).cwiseAbs().maxCoeff(),
              1e-15);

    const Mat3 a = rodrigues(Vec3(0.2, 0.4, -0.1)) * 1.3;
    const Mat3 m = rodrigues(Vec3(-0.5, 0.1, 0.3));
    const auto composed = transport_covariance(s, a * m);
    const auto stepwise = transport_covariance(transport_covariance(s, m), a);
    EXPECT_LT((composed - stepwise).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PipelineGradient, CanonicalMeanAllVariants) {
    for (auto v : {DeformVariant::Translation, DeformVariant::Rigid, DeformVariant::Affine}) {
        const auto c = check_pipeline_mean_gradient(21, v);
        EXPECT_TRUE(c.passed) << to_string(v) << ": " << c.detail << " max " << c.max_error;
    }
}
