// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/autodiff.hpp"
#include "rigsplat/geometry.hpp"

#include <cstdint>
#include <vector>

namespace rigsplat {

/// Frequency encoding of 3-D coordinates.
///
/// Layout: [x (if include_input), sin(2^0 pi x), cos(2^0 pi x), ...,
/// sin(2^(L-1) pi x), cos(2^(L-1) pi x)] where every bracketed block holds the
/// three axes in order.
struct PositionalEncoding {
    int num_frequencies = 6;
    bool include_input = true;

    [[nodiscard]] int output_dim() const { return 3 * (2 * num_frequencies + (include_input ? 1 : 0)); }
};

Eigen::VectorXd encode_position(const Vec3& x, const PositionalEncoding& enc);
/// d encode / d x, output_dim x 3.
MatX encode_position_jacobian(const Vec3& x, const PositionalEncoding& enc);
/// Batched tape version; x is N x 3.
ad::Tensor encode_positions(const ad::Tensor& x, const PositionalEncoding& enc);

/// Fully connected ReLU network with a linear output layer.
class Mlp {
public:
    Mlp() = default;
    /// He-uniform initialization from `seed`; the output layer is zeroed when
    /// `zero_output_layer` is set.
    Mlp(int input_dim, int hidden_layers, int width, int output_dim, std::uint64_t seed,
        bool zero_output_layer);

    [[nodiscard]] ad::Tensor forward(const ad::Tensor& x) const;
    [[nodiscard]] Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
    /// Output and d output / d input given d input / d z for some z (the
    /// tangent is propagated forward through every layer).
    [[nodiscard]] std::pair<Eigen::VectorXd, MatX> forward_tangent(const Eigen::VectorXd& x,
                                                                   const MatX& dx) const;

    [[nodiscard]] int input_dim() const { return input_dim_; }
    [[nodiscard]] int output_dim() const { return output_dim_; }
    [[nodiscard]] int hidden_layers() const { return hidden_layers_; }
    [[nodiscard]] int width() const { return width_; }

    /// Weights (in x out) and biases (out), alternating: W0, b0, W1, b1, ...
    [[nodiscard]] std::vector<ad::Tensor>& parameters() { return params_; }
    [[nodiscard]] const std::vector<ad::Tensor>& parameters() const { return params_; }
    [[nodiscard]] std::size_t num_parameters() const;
    void zero_grad();
    void set_requires_grad(bool on);

    /// Deep copy (tensors are otherwise shared handles).
    [[nodiscard]] Mlp clone() const;

private:
    int input_dim_ = 0;
    int hidden_layers_ = 0;
    int width_ = 0;
    int output_dim_ = 0;
    std::vector<ad::Tensor> params_;
};

}  // namespace rigsplat
