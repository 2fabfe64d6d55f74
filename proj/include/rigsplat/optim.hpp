// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rigsplat {

class DivergedError : public std::runtime_error {
public:
    DivergedError(const std::string& parameter, std::int64_t step);
    [[nodiscard]] const std::string& parameter() const { return parameter_; }

private:
    std::string parameter_;
};

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

// Default learning rates per parameter group.
inline constexpr double kLrMeans = 1.6e-4;
inline constexpr double kLrMlp = 1e-3;
inline constexpr double kLrPose = 1e-4;

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::int64_t step = 0;
    AdamHyper hyper;

    AdamState() = default;
    AdamState(std::size_t n, AdamHyper h) : first_moment(n, 0.0), second_moment(n, 0.0), hyper(h) {}
};

/// Bias-corrected Adam, in place. Throws DivergedError naming `name` if any
/// gradient is NaN or infinite; params are left untouched in that case.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::string_view name);

/// Re-indexes moments after rows were cloned, split or pruned. Row r of the
/// result copies row sources[r] of the old state (stride entries per row), or
/// starts at zero when sources[r] < 0.
void remap_adam_rows(AdamState& state, std::size_t stride, std::span<const int> sources);

struct FiniteDifferenceReport {
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    std::size_t checked = 0;  // coordinates above the magnitude floor
    std::vector<std::size_t> failing;
    std::vector<double> numeric;

    [[nodiscard]] bool passed() const { return failing.empty(); }
};

/// Central differences of f around params, compared entrywise with `analytic`.
/// Relative error is |a - n| / max(|a|, |n|); coordinates where both are
/// below `magnitude_floor` are skipped.
FiniteDifferenceReport finite_difference_check(
    const std::function<double(std::span<const double>)>& f, std::span<const double> params,
    std::span<const double> analytic, double h, double tolerance, double magnitude_floor = 1e-6);

}  // namespace rigsplat
