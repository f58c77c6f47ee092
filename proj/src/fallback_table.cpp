#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "moments.hpp"
#include "subslot/agents.hpp"
#include "subslot/rng.hpp"

namespace subslot {

namespace {

constexpr int kBasisGrid = 81;
constexpr double kBasisGridSpan = 6.0;
constexpr double kBasisGridFloor = 0.005;

double lerp_cost(double a, double b, double frac) noexcept {
    if (frac == 0.0) return a;
    if (!std::isfinite(a) || !std::isfinite(b)) return kUnavailable;
    return a + (b - a) * frac;
}

Action cheapest(double close, double retry, double wait) noexcept {
    // Costs: lower is better; ties keep close over retry over wait.
    return choose_action(-close, -retry, -wait);
}

}  // namespace

double FallbackTable::Cell::best() const noexcept { return std::min({close, retry, wait}); }

FallbackTable::FallbackTable(const AgentParams& params, const BeliefModel& belief, TradeDirection direction)
    : k_max_(params.k_max),
      subslots_(belief.subslots),
      wait_max_(params.wait_max),
      direction_(direction),
      close_cost_(sign_of(direction) + belief.beta_halfspread) {
    params.validate();
    belief.validate();
    if (belief.has_basis()) {
        const double half = std::max(kBasisGridSpan * belief.relative_basis_std(), kBasisGridFloor);
        grid_.resize(kBasisGrid);
        for (int j = 0; j < kBasisGrid; ++j) grid_[j] = -half + 2.0 * half * j / (kBasisGrid - 1);
    } else {
        grid_.assign(1, 0.0);
    }
    cells_.resize(static_cast<std::size_t>(k_max_) * (subslots_ + 1) * (wait_max_ + 1) * grid_.size());
}

std::size_t FallbackTable::index(int k, int m, int w, std::size_t j) const {
    if (k < 0 || k >= k_max_ || m < 0 || m > subslots_ || w < 0 || w > wait_max_ || j >= grid_.size()) {
        throw std::out_of_range("fallback table index out of range");
    }
    return ((static_cast<std::size_t>(k) * (subslots_ + 1) + m) * (wait_max_ + 1) + w) * grid_.size() + j;
}

FallbackTable::Cell& FallbackTable::cell(int k, int m, int w, std::size_t j) { return cells_[index(k, m, w, j)]; }
const FallbackTable::Cell& FallbackTable::cell(int k, int m, int w, std::size_t j) const {
    return cells_[index(k, m, w, j)];
}

FallbackTable::Cell FallbackTable::at(int k, int m, int w, double basis) const {
    if (k >= k_max_) return Cell{close_cost_, kUnavailable, kUnavailable, Action::close};
    if (grid_.size() == 1) return cell(k, m, w, 0);
    const double step = grid_[1] - grid_[0];
    const double pos = std::clamp((basis - grid_.front()) / step, 0.0, static_cast<double>(grid_.size() - 1));
    const auto j = std::min(static_cast<std::size_t>(pos), grid_.size() - 2);
    const double frac = pos - static_cast<double>(j);
    const Cell& a = cell(k, m, w, j);
    const Cell& b = cell(k, m, w, j + 1);
    Cell out;
    out.close = lerp_cost(a.close, b.close, frac);
    out.retry = lerp_cost(a.retry, b.retry, frac);
    out.wait = lerp_cost(a.wait, b.wait, frac);
    out.action = cheapest(out.close, out.retry, out.wait);
    return out;
}

double FallbackTable::best_cost(int k, int m, int w, double basis) const { return at(k, m, w, basis).best(); }

namespace {

struct NodeKernel {
    const AgentParams& params;
    const BeliefModel& belief;
    std::uint64_t seed;

    void fill(FallbackTable& t, int k, int m, int w, std::size_t j) const {
        const int M = belief.subslots;
        const double s = sign_of(t.direction());
        const double e = t.grid()[j];
        const double rho = belief.basis_persistence;
        const double b = belief.relative_basis_std();
        const auto node = static_cast<std::uint64_t>(((k * (M + 1) + m) * (params.wait_max + 1) + w) * 2 +
                                                     (s > 0 ? 0 : 1));
        const auto n = static_cast<std::size_t>(params.n_paths);
        std::vector<double> a(n), f(n);

        FallbackTable::Cell c;
        c.close = t.close_cost();
        if (wait_available(params, M, k, m, w)) {
            const double child = t.cell(k, m + 1, w + 1, j).best();
            for (std::size_t i = 0; i < n; ++i) {
                CounterRng rng(seed, Stream::belief_mc, static_cast<std::uint64_t>(detail::McTag::table_wait), node, i);
                a[i] = std::exp(belief.sigma * rng.normal()) * child;
            }
            const Moments mo = detail::sample_moments(a);
            c.wait = mo.mean + params.lambda * std::sqrt(mo.variance);
        }
        if (retry_available(params, M, k, m)) {
            const double scale = belief.sigma * std::sqrt(static_cast<double>(M - m));
            for (std::size_t i = 0; i < n; ++i) {
                CounterRng rng(seed, Stream::belief_mc, static_cast<std::uint64_t>(detail::McTag::table_retry), node,
                               i);
                const double r = std::exp(scale * rng.normal());
                const double z2 = rng.normal();
                const double e_next = belief.has_basis() ? rho * e + std::sqrt(1.0 - rho * rho) * b * z2 : 0.0;
                a[i] = s * r * (1.0 + e_next);
                f[i] = r * (k + 1 >= params.k_max ? t.close_cost() : t.best_cost(k + 1, 0, 0, e_next));
            }
            const Moments mo = detail::retry_moments(params.alpha, detail::sample_moments(a), detail::sample_moments(f));
            c.retry = mo.mean + params.lambda * std::sqrt(mo.variance);
        }
        c.action = cheapest(c.close, c.retry, c.wait);
        t.cell(k, m, w, j) = c;
    }
};

}  // namespace

FallbackTable build_fallback_table_serial(const AgentParams& params, const BeliefModel& belief,
                                          TradeDirection direction, std::uint64_t seed) {
    FallbackTable t(params, belief, direction);
    const NodeKernel kernel{params, belief, seed};
    const std::size_t g = t.grid().size();
    for (int k = params.k_max - 1; k >= 0; --k)
        for (int m = belief.subslots; m >= 0; --m)
            for (int w = params.wait_max; w >= 0; --w)
                for (std::size_t j = 0; j < g; ++j) kernel.fill(t, k, m, w, j);
    return t;
}

FallbackTable build_fallback_table_omp(const AgentParams& params, const BeliefModel& belief,
                                       TradeDirection direction, std::uint64_t seed) {
    FallbackTable t(params, belief, direction);
    const NodeKernel kernel{params, belief, seed};
    const long g = static_cast<long>(t.grid().size());
    const long cells = (params.wait_max + 1) * g;
    // Cells in one (k, m) layer depend only on finished layers.
    for (int k = params.k_max - 1; k >= 0; --k) {
        for (int m = belief.subslots; m >= 0; --m) {
#pragma omp parallel for schedule(static)
            for (long idx = 0; idx < cells; ++idx) {
                kernel.fill(t, k, m, static_cast<int>(idx / g), static_cast<std::size_t>(idx % g));
            }
        }
    }
    return t;
}

}  // namespace subslot
