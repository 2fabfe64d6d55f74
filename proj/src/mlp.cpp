// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/mlp.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace rigsplat {

Eigen::VectorXd encode_position(const Vec3& x, const PositionalEncoding& enc) {
    Eigen::VectorXd out(enc.output_dim());
    int o = 0;
    if (enc.include_input) {
        out.segment<3>(o) = x;
        o += 3;
    }
    for (int f = 0; f < enc.num_frequencies; ++f) {
        const double w = std::ldexp(std::numbers::pi, f);
        for (int a = 0; a < 3; ++a) out[o + a] = std::sin(w * x[a]);
        for (int a = 0; a < 3; ++a) out[o + 3 + a] = std::cos(w * x[a]);
        o += 6;
    }
    return out;
}

MatX encode_position_jacobian(const Vec3& x, const PositionalEncoding& enc) {
    MatX jac = MatX::Zero(enc.output_dim(), 3);
    int o = 0;
    if (enc.include_input) {
        for (int a = 0; a < 3; ++a) jac(a, a) = 1.0;
        o += 3;
    }
    for (int f = 0; f < enc.num_frequencies; ++f) {
        const double w = std::ldexp(std::numbers::pi, f);
        for (int a = 0; a < 3; ++a) {
            jac(o + a, a) = w * std::cos(w * x[a]);
            jac(o + 3 + a, a) = -w * std::sin(w * x[a]);
        }
        o += 6;
    }
    return jac;
}

ad::Tensor encode_positions(const ad::Tensor& x, const PositionalEncoding& enc) {
    std::vector<ad::Tensor> parts;
    if (enc.include_input) parts.push_back(x);
    for (int f = 0; f < enc.num_frequencies; ++f) {
        const auto scaled = ad::scale(x, std::ldexp(std::numbers::pi, f));
        parts.push_back(ad::sin(scaled));
        parts.push_back(ad::cos(scaled));
    }
    if (parts.empty()) throw ad::ShapeError("positional encoding with no outputs");
    return ad::concat(parts);
}

Mlp::Mlp(int input_dim, int hidden_layers, int width, int output_dim, std::uint64_t seed,
         bool zero_output_layer)
    : input_dim_(input_dim), hidden_layers_(hidden_layers), width_(width), output_dim_(output_dim) {
    std::mt19937_64 rng(seed);
    int fan_in = input_dim;
    for (int l = 0; l <= hidden_layers; ++l) {
        const bool last = l == hidden_layers;
        const int fan_out = last ? output_dim : width;
        std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out, 0.0);
        if (!(last && zero_output_layer)) {
            const double bound = std::sqrt(6.0 / fan_in);
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (auto& v : w) v = dist(rng);
        }
        params_.push_back(ad::Tensor::from({fan_in, fan_out}, std::move(w), true));
        params_.push_back(ad::Tensor::zeros({fan_out}, true));
        fan_in = fan_out;
    }
}

ad::Tensor Mlp::forward(const ad::Tensor& x) const {
    ad::Tensor h = x;
    for (int l = 0; l <= hidden_layers_; ++l) {
        h = ad::add(ad::matmul(h, params_[2 * l]), params_[2 * l + 1]);
        if (l < hidden_layers_) h = ad::relu(h);
    }
    return h;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
    Eigen::VectorXd h = x;
    for (int l = 0; l <= hidden_layers_; ++l) {
        const auto& w = params_[2 * l];
        const auto& b = params_[2 * l + 1];
        Eigen::Map<const MatX> wm(w.values().data(), w.rows(), w.cols());
        Eigen::Map<const Eigen::VectorXd> bv(b.values().data(), b.numel());
        Eigen::VectorXd z = wm.transpose() * h + bv;
        if (l < hidden_layers_) z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    return h;
}

std::pair<Eigen::VectorXd, MatX> Mlp::forward_tangent(const Eigen::VectorXd& x, const MatX& dx) const {
    Eigen::VectorXd h = x;
    MatX dh = dx;
    for (int l = 0; l <= hidden_layers_; ++l) {
        const auto& w = params_[2 * l];
        const auto& b = params_[2 * l + 1];
        Eigen::Map<const MatX> wm(w.values().data(), w.rows(), w.cols());
        Eigen::Map<const Eigen::VectorXd> bv(b.values().data(), b.numel());
        Eigen::VectorXd z = wm.transpose() * h + bv;
        MatX dz = wm.transpose() * dh;
        if (l < hidden_layers_) {
            for (Eigen::Index i = 0; i < z.size(); ++i) {
                if (z[i] <= 0.0) {
                    z[i] = 0.0;
                    dz.row(i).setZero();
                }
            }
        }
        h = std::move(z);
        dh = std::move(dz);
    }
    return {h, dh};
}

std::size_t Mlp::num_parameters() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.numel());
    return n;
}

void Mlp::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Mlp::set_requires_grad(bool on) {
    for (auto& p : params_) p.set_requires_grad(on);
}

Mlp Mlp::clone() const {
    Mlp out;
    out.input_dim_ = input_dim_;
    out.hidden_layers_ = hidden_layers_;
    out.width_ = width_;
    out.output_dim_ = output_dim_;
    for (const auto& p : params_) {
        out.params_.push_back(ad::Tensor::from(p.shape(), {p.values().begin(), p.values().end()},
                                               p.requires_grad()));
    }
    return out;
}

}  // namespace rigsplat
