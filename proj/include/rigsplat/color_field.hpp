// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/geometry.hpp"
#include "rigsplat/mlp.hpp"

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rigsplat {

struct ColorConfig {
    int hidden_layers = 4;
    int width = 128;
    int num_frequencies = 10;
};

/// Canonical-space color field: sigmoid(MLP(encode(x))).
class ColorMlp {
public:
    ColorMlp() = default;
    ColorMlp(const ColorConfig& config, std::uint64_t seed);

    [[nodiscard]] const ColorConfig& config() const { return config_; }
    [[nodiscard]] const PositionalEncoding& encoding() const { return encoding_; }
    [[nodiscard]] Mlp& net() { return net_; }
    [[nodiscard]] const Mlp& net() const { return net_; }

    /// Batched colors on the tape, x is N x 3.
    [[nodiscard]] ad::Tensor forward(const ad::Tensor& x) const;
    /// Batched colors without recording a graph.
    [[nodiscard]] std::vector<Vec3> evaluate(const std::vector<Vec3>& x) const;

    [[nodiscard]] ColorMlp clone() const;

private:
    ColorConfig config_;
    PositionalEncoding encoding_;
    Mlp net_;
};

Vec3 query_color(const Vec3& x, const ColorMlp& mlp);

/// dC/dx, rows index color channels.
Mat3 color_jacobian(const Vec3& x, const ColorMlp& mlp);

/// Mean gradient with the color-field term: dL/dx_render + J^T dL/dC.
Vec3 mean_gradient_with_color_term(const Vec3& dL_dx_render, const Vec3& dL_dC, const Mat3& jacobian);

struct ColorSample {
    Vec3 position;
    Vec3 color;
};

struct PretrainOptions {
    int steps = 2000;
    double lr = 1e-3;
    int batch_size = 4096;  // full batch when >= sample count
    std::uint64_t seed = 0;
};

/// L2 regression of the field onto samples with Adam. Returns the final
/// full-set mean squared error.
double pretrain_color_field(const std::vector<ColorSample>& samples, ColorMlp& mlp,
                            const PretrainOptions& options);

class StaleCacheError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Colors evaluated once for a fixed set of Gaussians.
struct ColorCache {
    std::vector<Vec3> colors;
    std::uint64_t generation = 0;

    /// Throws StaleCacheError when the set has been edited since baking.
    [[nodiscard]] const std::vector<Vec3>& colors_for(const GaussianSet& gaussians) const;
};

ColorCache bake_color_cache(const GaussianSet& gaussians, const ColorMlp& mlp);

}  // namespace rigsplat
