// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/color_field.hpp"

#include "rigsplat/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rigsplat {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

ad::Tensor positions_tensor(const std::vector<Vec3>& x) {
    std::vector<double> flat(3 * x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (int a = 0; a < 3; ++a) flat[3 * i + a] = x[i][a];
    return ad::Tensor::from({static_cast<std::int64_t>(x.size()), 3}, std::move(flat));
}

}  // namespace

ColorMlp::ColorMlp(const ColorConfig& config, std::uint64_t seed)
    : config_(config),
      encoding_{config.num_frequencies, true},
      net_(encoding_.output_dim(), config.hidden_layers, config.width, 3, seed,
           /*zero_output_layer=*/true) {}

ad::Tensor ColorMlp::forward(const ad::Tensor& x) const {
    return ad::sigmoid(net_.forward(encode_positions(x, encoding_)));
}

std::vector<Vec3> ColorMlp::evaluate(const std::vector<Vec3>& x) const {
    std::vector<Vec3> out(x.size());
    if (x.empty()) return out;
    const auto c = forward(positions_tensor(x));
    const auto v = c.values();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
    return out;
}

ColorMlp ColorMlp::clone() const {
    ColorMlp out;
    out.config_ = config_;
    out.encoding_ = encoding_;
    out.net_ = net_.clone();
    return out;
}

Vec3 query_color(const Vec3& x, const ColorMlp& mlp) {
    const Eigen::VectorXd z = mlp.net().forward(encode_position(x, mlp.encoding()));
    return {sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2])};
}

Mat3 color_jacobian(const Vec3& x, const ColorMlp& mlp) {
    const auto [z, dz] =
        mlp.net().forward_tangent(encode_position(x, mlp.encoding()), encode_position_jacobian(x, mlp.encoding()));
    Mat3 jac;
    for (int c = 0; c < 3; ++c) {
        const double s = sigmoid(z[c]);
        jac.row(c) = s * (1.0 - s) * dz.row(c);
    }
    return jac;
}

Vec3 mean_gradient_with_color_term(const Vec3& dL_dx_render, const Vec3& dL_dC, const Mat3& jacobian) {
    return dL_dx_render + jacobian.transpose() * dL_dC;
}

double pretrain_color_field(const std::vector<ColorSample>& samples, ColorMlp& mlp,
                            const PretrainOptions& options) {
    if (samples.empty()) throw std::invalid_argument("pretrain_color_field: empty sample set");
    auto& params = mlp.net().parameters();
    std::vector<AdamState> states;
    for (const auto& p : params) states.emplace_back(static_cast<std::size_t>(p.numel()), AdamHyper{options.lr});

    const auto n = samples.size();
    const std::size_t batch = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, options.batch_size)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(options.seed);
    std::size_t cursor = n;

    for (int step = 0; step < options.steps; ++step) {
        std::vector<Vec3> xs(batch), ts(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor >= n) {
                if (batch < n) std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const auto& s = samples[order[cursor++]];
            xs[b] = s.position;
            ts[b] = s.color;
        }
        mlp.net().zero_grad();
        const auto pred = mlp.forward(positions_tensor(xs));
        const auto diff = ad::add(pred, ad::scale(positions_tensor(ts), -1.0));
        ad::backward(ad::mean(ad::mul(diff, diff)));
        for (std::size_t i = 0; i < params.size(); ++i)
            adam_step(params[i].values(), params[i].grad(), states[i], "color_mlp");
    }

    std::vector<Vec3> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = samples[i].position;
    const auto pred = mlp.evaluate(all);
    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) mse += (pred[i] - samples[i].color).squaredNorm();
    return mse / (3.0 * static_cast<double>(n));
}

const std::vector<Vec3>& ColorCache::colors_for(const GaussianSet& gaussians) const {
    if (gaussians.generation != generation || gaussians.size() != colors.size())
        throw StaleCacheError("color cache is stale: baked for generation " + std::to_string(generation) +
                              ", set is at generation " + std::to_string(gaussians.generation));
    return colors;
}

ColorCache bake_color_cache(const GaussianSet& gaussians, const ColorMlp& mlp) {
    std::vector<Vec3> xs(gaussians.size());
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = gaussians.gaussians[i].mean;
    return {mlp.evaluate(xs), gaussians.generation};
}

}  // namespace rigsplat
