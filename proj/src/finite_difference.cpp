// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rigsplat {

FiniteDifferenceReport finite_difference_check(
    const std::function<double(std::span<const double>)>& f, std::span<const double> params,
    std::span<const double> analytic, double h, double tolerance, double magnitude_floor) {
    if (analytic.size() != params.size())
        throw std::invalid_argument("finite_difference_check: gradient length mismatch");
    FiniteDifferenceReport report;
    report.numeric.resize(params.size());
    std::vector<double> x(params.begin(), params.end());
    double sum_rel = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        const double num = (fp - fm) / (2.0 * h);
        report.numeric[i] = num;
        const double scale = std::max(std::abs(num), std::abs(analytic[i]));
        if (!std::isfinite(num) || !std::isfinite(analytic[i])) {
            report.failing.push_back(i);
            continue;
        }
        if (scale <= magnitude_floor) continue;
        const double rel = std::abs(num - analytic[i]) / scale;
        ++report.checked;
        sum_rel += rel;
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel > tolerance) report.failing.push_back(i);
    }
    if (report.checked > 0) report.mean_rel_error = sum_rel / static_cast<double>(report.checked);
    return report;
}

}  // namespace rigsplat
