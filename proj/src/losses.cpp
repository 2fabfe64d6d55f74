// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rigsplat {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.width) + "x" +
                                    std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                                    std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                                    std::to_string(b.channels) + ")");
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

Image pool2(const Image& in) {
    Image out(in.width / 2, in.height / 2, in.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < in.channels; ++c)
                out.at(x, y, c) = 0.25 * (in.at(2 * x, 2 * y, c) + in.at(2 * x + 1, 2 * y, c) +
                                          in.at(2 * x, 2 * y + 1, c) + in.at(2 * x + 1, 2 * y + 1, c));
    return out;
}

// Adds the gradient of a pooled image back onto its source.
void pool2_backward(const Image& d_out, Image& d_in) {
    for (int y = 0; y < d_out.height; ++y)
        for (int x = 0; x < d_out.width; ++x)
            for (int c = 0; c < d_out.channels; ++c) {
                const double g = 0.25 * d_out.at(x, y, c);
                d_in.at(2 * x, 2 * y, c) += g;
                d_in.at(2 * x + 1, 2 * y, c) += g;
                d_in.at(2 * x, 2 * y + 1, c) += g;
                d_in.at(2 * x + 1, 2 * y + 1, c) += g;
            }
}

// Mean L1 of pixel values plus mean L1 of x and y differences at one level;
// accumulates the gradient w.r.t. r into d_r.
double level_terms(const Image& r, const Image& t, Image& d_r) {
    double total = 0.0;
    const double n = static_cast<double>(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double diff = r.data[i] - t.data[i];
        total += std::abs(diff) / n;
        d_r.data[i] += sign(diff) / n;
    }
    if (r.width >= 2) {
        const double nx = static_cast<double>(r.width - 1) * r.height * r.channels;
        for (int y = 0; y < r.height; ++y)
            for (int x = 0; x + 1 < r.width; ++x)
                for (int c = 0; c < r.channels; ++c) {
                    const double diff = (r.at(x + 1, y, c) - r.at(x, y, c)) - (t.at(x + 1, y, c) - t.at(x, y, c));
                    total += std::abs(diff) / nx;
                    const double g = sign(diff) / nx;
                    d_r.at(x + 1, y, c) += g;
                    d_r.at(x, y, c) -= g;
                }
    }
    if (r.height >= 2) {
        const double ny = static_cast<double>(r.height - 1) * r.width * r.channels;
        for (int y = 0; y + 1 < r.height; ++y)
            for (int x = 0; x < r.width; ++x)
                for (int c = 0; c < r.channels; ++c) {
                    const double diff = (r.at(x, y + 1, c) - r.at(x, y, c)) - (t.at(x, y + 1, c) - t.at(x, y, c));
                    total += std::abs(diff) / ny;
                    const double g = sign(diff) / ny;
                    d_r.at(x, y + 1, c) += g;
                    d_r.at(x, y, c) -= g;
                }
    }
    return total;
}

constexpr int kPerceptualLevels = 3;

}  // namespace

LossValue loss_l1(const Image& render, const Image& target) {
    require_same(render, target, "loss_l1");
    LossValue out{0.0, Image(render.width, render.height, render.channels)};
    if (render.size() == 0) return out;
    const double n = static_cast<double>(render.size());
    for (std::size_t i = 0; i < render.size(); ++i) {
        const double diff = render.data[i] - target.data[i];
        out.value += std::abs(diff);
        out.grad.data[i] = sign(diff) / n;
    }
    out.value /= n;
    return out;
}

LossValue loss_perceptual(const Image& render, const Image& target) {
    require_same(render, target, "loss_perceptual");
    if (render.width < 8 || render.height < 8)
        throw std::invalid_argument("loss_perceptual: images must be at least 8x8");

    std::vector<Image> rs{render}, ts{target};
    for (int l = 0; l < kPerceptualLevels; ++l) {
        rs.push_back(pool2(rs.back()));
        ts.push_back(pool2(ts.back()));
    }
    std::vector<Image> grads;
    for (const auto& r : rs) grads.emplace_back(r.width, r.height, r.channels);

    LossValue out;
    for (int l = 1; l <= kPerceptualLevels; ++l) out.value += level_terms(rs[l], ts[l], grads[l]);
    for (int l = kPerceptualLevels; l >= 1; --l) pool2_backward(grads[l], grads[l - 1]);
    out.grad = std::move(grads[0]);
    return out;
}

LossValue loss_dice(const Image& mask_render, const Image& mask_target) {
    require_same(mask_render, mask_target, "loss_dice");
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < mask_render.size(); ++i) {
        inter += mask_render.data[i] * mask_target.data[i];
        sp += mask_render.data[i];
        sg += mask_target.data[i];
    }
    const double num = 2.0 * inter + kDiceEpsilon;
    const double den = sp + sg + kDiceEpsilon;
    LossValue out{1.0 - num / den, Image(mask_render.width, mask_render.height, mask_render.channels)};
    for (std::size_t i = 0; i < mask_render.size(); ++i)
        out.grad.data[i] = -(2.0 * mask_target.data[i] * den - num) / (den * den);
    return out;
}

double psnr(const Image& a, const Image& b) {
    require_same(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mse += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    mse /= static_cast<double>(std::max<std::size_t>(1, a.size()));
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

}  // namespace rigsplat
