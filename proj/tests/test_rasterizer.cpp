// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/check.hpp"
#include "rigsplat/rasterizer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rigsplat;

namespace {

Camera axis_camera(double f, int size) {
    Camera c;
    c.focal = Vec2(f, f);
    c.principal_point = Vec2(0.5 * size, 0.5 * size);
    c.width = c.height = size;
    return c;
}

SplattedGaussian splat(Vec2 m, double var, double alpha0, Vec3 color, double depth, int idx) {
    SplattedGaussian s;
    s.mean2d = m;
    s.cov2d = var * Mat2::Identity();
    s.alpha0 = alpha0;
    s.color = color;
    s.depth = depth;
    s.source_index = idx;
    return s;
}

double sum(const Image& im) {
    double s = 0;
    for (double v : im.data) s += v;
    return s;
}

}  // namespace

TEST(Project, OpticalAxisHitsPrincipalPoint) {
    const auto cam = axis_camera(100, 64);
    const auto s = project_gaussian(Vec3(0, 0, 4), 0.01 * Mat3::Identity(), cam);
    ASSERT_TRUE(s);
    EXPECT_LT((s->mean2d - cam.principal_point).norm(), 1e-15);
    EXPECT_DOUBLE_EQ(s->depth, 4.0);
}

TEST(Project, IsotropicCovarianceScalesWithFocalOverDepth) {
    const auto cam = axis_camera(100, 64);
    const double sd = 0.05, d = 4.0;
    RasterSettings st;
    const auto s = project_gaussian(Vec3(0, 0, d), sd * sd * Mat3::Identity(), cam, st);
    ASSERT_TRUE(s);
    const double expect = std::pow(100 * sd / d, 2) + st.low_pass;
    EXPECT_NEAR(s->cov2d(0, 0), expect, 1e-12);
    EXPECT_NEAR(s->cov2d(1, 1), expect, 1e-12);
    EXPECT_NEAR(s->cov2d(0, 1), 0.0, 1e-15);
}

TEST(Project, BehindCameraIsCulled) {
    const auto cam = axis_camera(100, 64);
    EXPECT_FALSE(project_gaussian(Vec3(0, 0, -1), 0.01 * Mat3::Identity(), cam));
    EXPECT_FALSE(project_gaussian(Vec3(0, 0, 0), 0.01 * Mat3::Identity(), cam));
}

TEST(Project, BackwardMatchesFiniteDifferences) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto c = check_projection_backward(seed);
        EXPECT_TRUE(c.passed) << c.detail << " max " << c.max_error;
    }
}

TEST(Render, NoSplatsIsBlack) {
    const auto cam = pixel_camera(32, 32);
    const auto out = render({}, cam);
    for (double v : out.rgb.data) EXPECT_EQ(v, 0.0);
    for (double v : out.alpha.data) EXPECT_EQ(v, 0.0);
}

TEST(Render, OpaqueSplatIsClamped) {
    const auto cam = pixel_camera(16, 16);
    const std::vector<SplattedGaussian> s = {splat(Vec2(5.5, 7.5), 1.0, 1.0, Vec3(0.2, 0.6, 1.0), 1.0, 0)};
    const auto out = render(s, cam);
    EXPECT_DOUBLE_EQ(out.rgb.at(5, 7, 0), 0.2 * 0.99);
    EXPECT_DOUBLE_EQ(out.rgb.at(5, 7, 1), 0.6 * 0.99);
    EXPECT_DOUBLE_EQ(out.rgb.at(5, 7, 2), 0.99);
    EXPECT_DOUBLE_EQ(out.alpha.at(5, 7, 0), 0.99);
}

TEST(Render, FrontToBackByDepth) {
    const auto cam = pixel_camera(16, 16);
    const std::vector<SplattedGaussian> s = {splat(Vec2(8.5, 8.5), 4.0, 0.5, Vec3(1, 0, 0), 2.0, 0),
                                             splat(Vec2(8.5, 8.5), 4.0, 0.5, Vec3(0, 1, 0), 1.0, 1)};
    const auto out = render(s, cam);
    EXPECT_DOUBLE_EQ(out.rgb.at(8, 8, 1), 0.5);
    EXPECT_DOUBLE_EQ(out.rgb.at(8, 8, 0), 0.25);
    EXPECT_DOUBLE_EQ(out.alpha.at(8, 8, 0), 0.75);
}

TEST(Render, TileMatchesBruteForce) {
    std::mt19937_64 rng(12);
    for (int scene = 0; scene < 20; ++scene) {
        const auto s = random_splats(rng, 100, 64, 64);
        const auto cam = pixel_camera(64, 64);
        const auto a = render(s, cam), b = render_brute_force(s, cam);
        for (std::size_t i = 0; i < a.rgb.size(); ++i) ASSERT_LT(std::abs(a.rgb.data[i] - b.rgb.data[i]), 1e-10);
        for (std::size_t i = 0; i < a.alpha.size(); ++i)
            ASSERT_LT(std::abs(a.alpha.data[i] - b.alpha.data[i]), 1e-10);
    }
}

TEST(Render, TileSizeDoesNotChangeImage) {
    std::mt19937_64 rng(3);
    const auto s = random_splats(rng, 150, 50, 40);
    const auto cam = pixel_camera(50, 40);
    RasterSettings a, b;
    a.tile_size = 16;
    b.tile_size = 7;
    EXPECT_EQ(render(s, cam, a).rgb.data, render(s, cam, b).rgb.data);
}

TEST(Render, EqualDepthsResolveBySourceIndex) {
    const auto cam = pixel_camera(8, 8);
    std::vector<SplattedGaussian> s = {splat(Vec2(4, 4), 4.0, 0.6, Vec3(1, 0, 0), 1.0, 1),
                                       splat(Vec2(4, 4), 4.0, 0.6, Vec3(0, 0, 1), 1.0, 0)};
    const auto a = render(s, cam);
    std::swap(s[0], s[1]);
    const auto b = render(s, cam);
    EXPECT_EQ(a.rgb.data, b.rgb.data);
    EXPECT_GT(a.rgb.at(3, 3, 2), a.rgb.at(3, 3, 0));
}

TEST(Render, ContributionIsAlphaTimesTransmittance) {
    const auto cam = pixel_camera(16, 16);
    const std::vector<SplattedGaussian> s = {splat(Vec2(8, 8), 3.0, 0.7, Vec3(1, 1, 1), 1.0, 0)};
    const auto out = render(s, cam);
    ASSERT_EQ(out.contribution.size(), 1u);
    EXPECT_NEAR(out.contribution[0], sum(out.alpha), 1e-12);
}

TEST(Backward, SingleSplatColorGradientIsAlpha) {
    const auto cam = pixel_camera(16, 16);
    const std::vector<SplattedGaussian> s = {splat(Vec2(7.3, 8.1), 5.0, 0.8, Vec3(0.3, 0.4, 0.5), 1.0, 0)};
    const auto out = render(s, cam);
    Image ones(16, 16, 3);
    for (auto& v : ones.data) v = 1.0;
    const auto g = render_backward(s, cam, ones, nullptr);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(g[0].d_color[c], sum(out.alpha), 1e-12);
}

TEST(Backward, MatchesFiniteDifferences) {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const auto c = check_rasterizer_backward(seed);
        EXPECT_TRUE(c.passed) << "seed " << seed << ": " << c.detail << " max " << c.max_error;
    }
}

TEST(Backward, InjectedSignErrorIsDetected) {
    const auto c = check_rasterizer_backward(1, true);
    EXPECT_FALSE(c.passed);
}

TEST(Backward, OccludedSplatGetsTransmittedGradient) {
    const auto cam = pixel_camera(16, 16);
    const auto back = splat(Vec2(8.5, 8.5), 2.0, 0.6, Vec3(0.1, 0.2, 0.3), 5.0, 1);
    const std::vector<SplattedGaussian> s = {splat(Vec2(8.5, 8.5), 1e6, 1.0, Vec3(1, 1, 1), 1.0, 0), back};
    Image ones(16, 16, 3);
    for (auto& v : ones.data) v = 1.0;
    const auto g = render_backward(s, cam, ones, nullptr);
    const std::vector<SplattedGaussian> alone = {back};
    const double expect = 0.01 * sum(render(alone, cam).alpha);
    EXPECT_GT(g[1].d_color[0], 0.0);
    EXPECT_NEAR(g[1].d_color[0], expect, 1e-9 * expect);
    EXPECT_LT(g[1].d_color[0], 0.02 * g[0].d_color[0]);
}

TEST(Backward, ParallelMatchesSerialReductionOrder) {
    std::mt19937_64 rng(9);
    const auto s = random_splats(rng, 60, 48, 48);
    const auto cam = pixel_camera(48, 48);
    Image w(48, 48, 3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : w.data) v = u(rng);
    const auto a = render_backward(s, cam, w, nullptr);
    const auto b = render_backward(s, cam, w, nullptr);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].d_mean2d, b[i].d_mean2d);
        EXPECT_EQ(a[i].d_color, b[i].d_color);
    }
}

TEST(Mask, EqualsAlphaOfNormalRender) {
    std::mt19937_64 rng(4);
    const auto s = random_splats(rng, 80, 32, 32);
    const auto cam = pixel_camera(32, 32);
    const auto m = render_mask(s, cam);
    const auto r = render(s, cam);
    // white composite sums alpha_i T_i, the alpha channel is 1 - T
    ASSERT_EQ(m.size(), r.alpha.size());
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m.data[i], r.alpha.data[i], 1e-12);
    for (double v : m.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(sum(render_mask({}, cam)), 0.0);
}

TEST(Mask, BackwardMatchesAlphaPath) {
    std::mt19937_64 rng(5);
    const auto s = random_splats(rng, 30, 24, 24);
    const auto cam = pixel_camera(24, 24);
    Image dm(24, 24, 1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : dm.data) v = u(rng);
    const Image zero(24, 24, 3);
    const auto a = render_mask_backward(s, cam, dm);
    const auto b = render_backward(s, cam, zero, &dm);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i].d_alpha0, b[i].d_alpha0, 1e-12);
        EXPECT_LT((a[i].d_mean2d - b[i].d_mean2d).norm(), 1e-12);
        EXPECT_EQ(a[i].d_color, Vec3::Zero());
    }
}
