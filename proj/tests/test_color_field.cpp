// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/check.hpp"
#include "rigsplat/color_field.hpp"
#include "rigsplat/optim.hpp"
#include "rigsplat/synthetic.hpp"
#include "rigsplat/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rigsplat;

namespace {

ColorMlp randomized(std::uint64_t seed) {
    ColorMlp m({2, 16, 3}, seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& p : m.net().parameters())
        for (double& v : p.values()) v = u(rng);
    return m;
}

}  // namespace

TEST(ColorField, ZeroOutputLayerGivesHalfGray) {
    const ColorMlp m({2, 16, 4}, 3);
    for (const Vec3 x : {Vec3(0, 0, 0), Vec3(0.3, 1.2, -0.4), Vec3(5, -5, 5)})
        EXPECT_EQ(query_color(x, m), Vec3::Constant(0.5));
}

TEST(ColorField, Pure) {
    const auto m = randomized(1);
    const Vec3 x(0.2, 0.9, -0.1);
    EXPECT_EQ(query_color(x, m), query_color(x, m));
}

TEST(ColorField, BatchedMatchesPointQueries) {
    const auto m = randomized(2);
    std::vector<Vec3> xs = {Vec3(0.1, 0.2, 0.3), Vec3(-0.4, 1.1, 0.0), Vec3(0.0, 0.0, 0.9)};
    const auto batch = m.evaluate(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_LT((batch[i] - query_color(xs[i], m)).norm(), 1e-15);
}

TEST(ColorJacobian, ConstantNetworkIsZero) {
    ColorMlp m({2, 16, 3}, 4);
    for (auto& p : m.net().parameters())
        for (double& v : p.values()) v = 0.0;
    EXPECT_EQ(color_jacobian(Vec3(0.3, 0.1, -0.2), m), Mat3::Zero());
}

TEST(ColorJacobian, MatchesFiniteDifferences) {
    const auto m = randomized(5);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 10; ++trial) {
        const Vec3 x(u(rng), u(rng), u(rng));
        const Mat3 j = color_jacobian(x, m);
        for (int a = 0; a < 3; ++a) {
            Vec3 p = x, q = x;
            p[a] += 1e-5;
            q[a] -= 1e-5;
            const Vec3 fd = (query_color(p, m) - query_color(q, m)) / 2e-5;
            for (int c = 0; c < 3; ++c) {
                if (std::abs(j(c, a)) <= 1e-6) continue;
                EXPECT_LT(std::abs(j(c, a) - fd[c]) / std::abs(j(c, a)), 1e-4);
            }
        }
    }
}

TEST(ColorJacobian, ChainRule) {
    const auto m = randomized(7);
    const Vec3 x(0.1, -0.3, 0.5), w(0.7, -1.2, 0.4);
    const Vec3 g = color_jacobian(x, m).transpose() * w;
    for (int a = 0; a < 3; ++a) {
        Vec3 p = x, q = x;
        p[a] += 1e-6;
        q[a] -= 1e-6;
        EXPECT_NEAR(g[a], (w.dot(query_color(p, m)) - w.dot(query_color(q, m))) / 2e-6, 1e-8);
    }
}

TEST(ColorTerm, Combination) {
    const Vec3 dx(0.1, -0.2, 0.3), dc(0.4, 0.5, -0.6);
    const Mat3 j = rodrigues(Vec3(0.3, 0.2, 0.1));
    EXPECT_EQ(mean_gradient_with_color_term(dx, Vec3::Zero(), j), dx);
    EXPECT_EQ(mean_gradient_with_color_term(Vec3::Zero(), dc, Mat3::Identity()), dc);
    EXPECT_LT((mean_gradient_with_color_term(dx, dc, j) - (dx + j.transpose() * dc)).norm(), 1e-16);
}

TEST(ColorTerm, EndToEndMeanGradient) {
    const auto c = check_pipeline_mean_gradient(4);
    EXPECT_TRUE(c.passed) << c.detail << " max " << c.max_error;
}

TEST(ColorTerm, TwoTermFormMatchesReversePass) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto c = check_color_term_consistency(seed);
        EXPECT_LT(c.max_error, 1e-10) << c.detail;
    }
}

TEST(Pretrain, MemorizesSinglePoint) {
    ColorMlp m({2, 16, 2}, 0);
    const std::vector<ColorSample> s = {{Vec3(0.2, 0.3, 0.4), Vec3(0.9, 0.1, 0.6)}};
    pretrain_color_field(s, m, {300, 1e-2, 1, 0});
    EXPECT_LT((query_color(s[0].position, m) - s[0].color).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Pretrain, TwoColorBoundary) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<ColorSample> s;
    for (int i = 0; i < 400; ++i) {
        const Vec3 x(u(rng), u(rng), u(rng));
        s.push_back({x, x.x() < 0 ? Vec3(0.2, 0.3, 0.8) : Vec3(0.7, 0.6, 0.1)});
    }
    ColorMlp m({2, 32, 3}, 1);
    pretrain_color_field(s, m, {2000, 5e-3, 400, 0});
    double worst = 0.0;
    for (const auto& smp : s) {
        const Vec3 c = query_color(smp.position, m);
        EXPECT_TRUE((c.array() > 0.0).all() && (c.array() < 1.0).all()) << c.transpose();
        if (std::abs(smp.position.x()) > 0.3) worst = std::max(worst, (c - smp.color).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 0.05);
}

TEST(Pretrain, FitsSyntheticRigColors) {
    const auto t = make_synthetic_rig(0);
    std::mt19937_64 rng(3);
    const auto init = initialize(t, 20000, rng);
    ColorMlp m({3, 64, 6}, 1);
    const double mse = pretrain_color_field(init.samples, m, {1500, 3e-3, 2048, 0});
    const auto pred = m.evaluate([&] {
        std::vector<Vec3> x;
        for (const auto& s : init.samples) x.push_back(s.position);
        return x;
    }());
    double mae = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) mae += (pred[i] - init.samples[i].color).cwiseAbs().mean();
    mae /= static_cast<double>(pred.size());
    EXPECT_LT(mae, 0.05) << "mse " << mse;
}

TEST(ColorCache, MatchesLiveRender) {
    auto scene = make_tiny_scene(8, 20, 32);
    ForwardOptions live;
    live.record_tape = false;
    const auto cache = bake_color_cache(scene.model.gaussians, scene.model.color);
    ForwardOptions cached = live;
    cached.color_cache = &cache;
    const auto a = forward(scene.model, scene.pose, scene.camera, live).render;
    const auto b = forward(scene.model, scene.pose, scene.camera, cached).render;
    EXPECT_EQ(a.rgb.data, b.rgb.data);
    EXPECT_EQ(a.alpha.data, b.alpha.data);
}

TEST(ColorCache, StaleAfterEdit) {
    auto scene = make_tiny_scene(8, 20, 32);
    const auto cache = bake_color_cache(scene.model.gaussians, scene.model.color);
    EXPECT_NO_THROW((void)cache.colors_for(scene.model.gaussians));
    ++scene.model.gaussians.generation;
    EXPECT_THROW((void)cache.colors_for(scene.model.gaussians), StaleCacheError);
}

TEST(ColorCache, TwentyThousandInOnePass) {
    const auto t = make_synthetic_rig(0);
    std::mt19937_64 rng(3);
    const auto set = initialize(t, 20000, rng).gaussians;
    const ColorMlp m({2, 32, 4}, 0);
    const auto cache = bake_color_cache(set, m);
    EXPECT_EQ(cache.colors.size(), 20000u);
    EXPECT_EQ(cache.generation, set.generation);
}
