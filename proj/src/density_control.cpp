// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/density.hpp"

#include <cmath>

namespace rigsplat {

void DensityStats::reset(std::size_t n) {
    screen_grad_sum.assign(n, 0.0);
    mean_grad_sum.assign(n, Vec3::Zero());
    count.assign(n, 0);
}

void DensityStats::accumulate(const FrameGrads& grads, std::span<const int> visible) {
    for (int i : visible) {
        screen_grad_sum[i] += grads.screen_grad[i];
        mean_grad_sum[i] += grads.mean[i];
        count[i] += 1;
    }
}

DensityResult density_control(AvatarModel& model, const DensityStats& stats, const DensitySettings& settings,
                              const SkinSettings& skin, std::mt19937_64& rng) {
    auto& old = model.gaussians.gaussians;
    const std::size_t n = old.size();
    if (stats.count.size() != n) throw std::invalid_argument("density_control: statistics do not match the set");

    DensityResult res;
    std::vector<Gaussian> kept, added;
    kept.reserve(n);
    std::vector<int> kept_src;
    std::normal_distribution<double> normal(0.0, 1.0);

    std::size_t projected = n;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& g = old[i];
        const double opacity = 1.0 / (1.0 + std::exp(-g.opacity_logit));
        if (opacity < settings.prune_opacity) {
            ++res.pruned;
            --projected;
            continue;
        }
        const bool hot = stats.average(i) > settings.grad_threshold;
        if (!hot) {
            kept.push_back(g);
            kept_src.push_back(static_cast<int>(i));
            continue;
        }
        const double max_std = std::exp(g.log_scale.maxCoeff());
        const bool large = max_std > settings.scale_threshold;
        if (projected + 1 > settings.max_gaussians) {
            res.capped = true;
            kept.push_back(g);
            kept_src.push_back(static_cast<int>(i));
            continue;
        }
        ++projected;
        if (large) {
            // Two children drawn from the parent's distribution, both shrunk.
            const Mat3 R = quaternion_to_matrix(g.rotation);
            const Vec3 sd = g.log_scale.array().exp();
            for (int c = 0; c < 2; ++c) {
                Gaussian child = g;
                const Vec3 z(normal(rng), normal(rng), normal(rng));
                child.mean = g.mean + R * sd.cwiseProduct(z);
                child.log_scale = g.log_scale.array() - std::log(settings.split_factor);
                added.push_back(child);
            }
            ++res.split;
        } else {
            kept.push_back(g);
            kept_src.push_back(static_cast<int>(i));
            Gaussian copy = g;
            const Vec3 avg = stats.mean_grad_sum[i] / std::max(1, stats.count[i]);
            if (avg.norm() > 0.0) copy.mean -= 0.5 * max_std * avg.normalized();
            added.push_back(copy);
            ++res.cloned;
        }
    }

    res.sources = kept_src;
    res.sources.resize(kept.size() + added.size(), -1);
    if (!res.changed()) {
        res.sources.resize(n);
        return res;
    }
    kept.insert(kept.end(), added.begin(), added.end());
    model.gaussians.gaussians = std::move(kept);
    ++model.gaussians.generation;
    model.rebuild_skin(skin);
    return res;
}

}  // namespace rigsplat
