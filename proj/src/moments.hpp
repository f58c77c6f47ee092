#pragma once

#include <algorithm>
#include <span>

#include "subslot/agents.hpp"

namespace subslot::detail {

// Population moments accumulated around the first sample, so a constant
// sequence yields its value and zero variance exactly.
inline Moments sample_moments(std::span<const double> xs) noexcept {
    if (xs.empty()) return {};
    const double x0 = xs[0];
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double x : xs) {
        const double d = x - x0;
        sum += d;
        sum_sq += d * d;
    }
    const double n = static_cast<double>(xs.size());
    const double mean_d = sum / n;
    return {x0 + mean_d, std::max(0.0, sum_sq / n - mean_d * mean_d)};
}

// Law of total variance for a landing (prob alpha) versus failing branch.
inline Moments retry_moments(double alpha, Moments fill, Moments fail) noexcept {
    const double gap = fill.mean - fail.mean;
    return {alpha * fill.mean + (1.0 - alpha) * fail.mean,
            alpha * fill.variance + (1.0 - alpha) * fail.variance + alpha * (1.0 - alpha) * gap * gap};
}

enum class McTag : std::uint64_t { table_wait = 1, table_retry, root_wait, root_retry, entry_path };

}  // namespace subslot::detail
