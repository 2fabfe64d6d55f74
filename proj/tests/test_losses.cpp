// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/losses.hpp"
#include "rigsplat/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rigsplat;

namespace {

Image filled(int w, int h, int c, double v) {
    Image im(w, h, c);
    for (auto& x : im.data) x = v;
    return im;
}

Image random_image(int w, int h, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    Image im(w, h, c);
    for (auto& x : im.data) x = u(rng);
    return im;
}

// Finite differences of a loss w.r.t. every pixel of the first argument.
void expect_gradient(const std::function<LossValue(const Image&)>& loss, const Image& x, double tol) {
    const auto lv = loss(x);
    auto f = [&](std::span<const double> p) {
        Image y = x;
        y.data.assign(p.begin(), p.end());
        return loss(y).value;
    };
    const auto r = finite_difference_check(f, x.data, lv.grad.data, 1e-5, tol);
    EXPECT_TRUE(r.passed()) << "max rel " << r.max_rel_error;
}

}  // namespace

TEST(L1, Values) {
    const auto a = random_image(8, 8, 3, 1);
    EXPECT_EQ(loss_l1(a, a).value, 0.0);
    EXPECT_EQ(loss_l1(filled(1, 1, 3, 0.0), filled(1, 1, 3, 1.0)).value, 1.0);
    Image b = a;
    for (auto& v : b.data) v += 0.25;
    EXPECT_NEAR(loss_l1(b, a).value, 0.25, 1e-15);
}

TEST(L1, ShapeMismatch) { EXPECT_THROW(loss_l1(filled(2, 2, 3, 0), filled(2, 3, 3, 0)), std::invalid_argument); }

TEST(L1, Gradient) {
    const auto t = random_image(6, 5, 3, 2);
    expect_gradient([&](const Image& x) { return loss_l1(x, t); }, random_image(6, 5, 3, 3), 1e-6);
}

TEST(Perceptual, IdenticalIsZero) {
    const auto a = random_image(16, 16, 3, 4);
    EXPECT_EQ(loss_perceptual(a, a).value, 0.0);
}

TEST(Perceptual, PositiveForDifferingPairs) {
    const auto a = random_image(16, 16, 3, 5);
    for (int i = 0; i < 20; ++i) {
        Image b = a;
        b.data[static_cast<std::size_t>(i * 37) % b.size()] += 0.01;
        EXPECT_GT(loss_perceptual(b, a).value, 0.0);
    }
}

TEST(Perceptual, TooSmallOrMismatched) {
    EXPECT_THROW(loss_perceptual(filled(4, 8, 3, 0), filled(4, 8, 3, 0)), std::invalid_argument);
    EXPECT_THROW(loss_perceptual(filled(8, 8, 3, 0), filled(16, 8, 3, 0)), std::invalid_argument);
}

TEST(Perceptual, ShiftedFineTextureScoresFarBelowL1) {
    // a one-pixel shift of a checkerboard is a total pixelwise mismatch but
    // nearly invisible once the receptive field spans more than one pixel
    Image a(32, 32, 1), b(32, 32, 1);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            a.at(x, y, 0) = (x + y) % 2;
            b.at(x, y, 0) = (x + 1 + y) % 2;
        }
    const double l1 = loss_l1(a, b).value;
    const double perc = loss_perceptual(a, b).value;
    const double l1_full = loss_l1(filled(32, 32, 1, 0), filled(32, 32, 1, 1)).value;
    const double perc_full = loss_perceptual(filled(32, 32, 1, 0), filled(32, 32, 1, 1)).value;
    EXPECT_EQ(l1 / l1_full, 1.0);
    EXPECT_LT(perc / perc_full, 1e-12);
}

TEST(Perceptual, GradientThroughPooling) {
    const auto t = random_image(16, 16, 3, 6);
    expect_gradient([&](const Image& x) { return loss_perceptual(x, t); }, random_image(16, 16, 3, 7), 1e-6);
}

TEST(Dice, Values) {
    Image full = filled(8, 8, 1, 1.0), empty = filled(8, 8, 1, 0.0);
    EXPECT_NEAR(loss_dice(full, full).value, 0.0, 1e-9);
    Image left = empty, right = empty, mid = empty;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 4; ++x) left.at(x, y, 0) = 1.0;
    for (int y = 0; y < 8; ++y)
        for (int x = 4; x < 8; ++x) right.at(x, y, 0) = 1.0;
    for (int y = 0; y < 8; ++y)
        for (int x = 2; x < 6; ++x) mid.at(x, y, 0) = 1.0;
    EXPECT_NEAR(loss_dice(left, right).value, 1.0, 1e-6);
    EXPECT_NEAR(loss_dice(left, mid).value, 0.5, 1e-6);
}

TEST(Dice, Gradient) {
    std::mt19937_64 rng(8);
    Image g(8, 8, 1);
    for (auto& v : g.data) v = rng() % 2;
    expect_gradient([&](const Image& x) { return loss_dice(x, g); }, random_image(8, 8, 1, 9), 1e-6);
}

TEST(Psnr, Values) {
    const auto a = random_image(8, 8, 3, 10);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    Image b = a;
    for (auto& v : b.data) v += 0.1;
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}
