// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/optim.hpp"

#include <cmath>

namespace rigsplat {

DivergedError::DivergedError(const std::string& parameter, std::int64_t step)
    : std::runtime_error("diverged: non-finite gradient in '" + parameter + "' at step " +
                         std::to_string(step)),
      parameter_(parameter) {}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::string_view name) {
    if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size())
        throw std::invalid_argument("adam_step: state does not match parameter '" + std::string(name) + "'");
    for (double g : grads)
        if (!std::isfinite(g)) throw DivergedError(std::string(name), state.step + 1);

    const auto& h = state.hyper;
    ++state.step;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    const double step_size = h.lr / bc1;
    const double inv_sqrt_bc2 = 1.0 / std::sqrt(bc2);
    const auto n = static_cast<std::int64_t>(params.size());
#pragma omp parallel for schedule(static) if (n > (1 << 15))
    for (std::int64_t i = 0; i < n; ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = h.beta1 * m + (1.0 - h.beta1) * grads[i];
        v = h.beta2 * v + (1.0 - h.beta2) * grads[i] * grads[i];
        params[i] -= step_size * m / (std::sqrt(v) * inv_sqrt_bc2 + h.eps);
    }
}

void remap_adam_rows(AdamState& state, std::size_t stride, std::span<const int> sources) {
    std::vector<double> m(sources.size() * stride, 0.0), v(sources.size() * stride, 0.0);
    for (std::size_t r = 0; r < sources.size(); ++r) {
        if (sources[r] < 0) continue;
        const auto src = static_cast<std::size_t>(sources[r]) * stride;
        for (std::size_t c = 0; c < stride; ++c) {
            m[r * stride + c] = state.first_moment[src + c];
            v[r * stride + c] = state.second_moment[src + c];
        }
    }
    state.first_moment = std::move(m);
    state.second_moment = std::move(v);
}

}  // namespace rigsplat
