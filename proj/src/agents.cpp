#include <cmath>
#include <vector>

#include "moments.hpp"
#include "subslot/agents.hpp"
#include "subslot/rng.hpp"

namespace subslot {

FallbackSolver::FallbackSolver(AgentParams params, BeliefModel belief, std::uint64_t seed, bool parallel)
    : params_(params), belief_(belief), seed_(seed) {
    params_.validate();
    belief_.validate();
    auto build = parallel ? build_fallback_table_omp : build_fallback_table_serial;
    buy_table_ = build(params_, belief_, TradeDirection::buy_dex, seed_);
    sell_table_ = build(params_, belief_, TradeDirection::sell_dex, seed_);
}

const FallbackTable& FallbackSolver::table(TradeDirection d) const noexcept {
    return d == TradeDirection::buy_dex ? buy_table_ : sell_table_;
}

double FallbackSolver::observed_basis(const MarketSnapshot& market) const noexcept {
    if (!belief_.has_basis()) return 0.0;
    const double mid = market.mid();
    return (market.dex - mid) / mid;
}

FallbackSolution FallbackSolver::solve(const FallbackState& state, const MarketSnapshot& market,
                                       std::uint64_t key) const {
    const int M = belief_.subslots;
    const double s = sign_of(state.direction);
    const double q = state.q;
    const double mid = market.mid();
    const double held = s * q * state.entry_price;
    const FallbackTable& t = table(state.direction);

    FallbackSolution out;
    Decision& d = out.decision;
    d.u_close = leg_profit(state.direction, q, state.entry_price, close_price(state.direction, market.bid, market.ask));
    d.retry_available = retry_available(params_, M, state.k, state.m);
    d.wait_available = wait_available(params_, M, state.k, state.m, state.waits_used);

    const auto n = static_cast<std::size_t>(params_.n_paths);
    std::vector<double> a(n), f(n);
    double sd_wait = 0.0;
    double sd_retry = 0.0;
    if (d.wait_available) {
        const double e = observed_basis(market);
        const double child = t.best_cost(state.k, state.m + 1, state.waits_used + 1, e);
        for (std::size_t i = 0; i < n; ++i) {
            CounterRng rng(seed_, Stream::belief_mc, static_cast<std::uint64_t>(detail::McTag::root_wait), key, i);
            a[i] = std::exp(belief_.sigma * rng.normal()) * child;
        }
        const Moments mo = detail::sample_moments(a);
        sd_wait = q * mid * std::sqrt(mo.variance);
        d.u_wait = held - q * mid * (mo.mean + params_.lambda * std::sqrt(mo.variance));
    }
    if (d.retry_available) {
        const double e = observed_basis(market);
        const double rho = belief_.basis_persistence;
        const double b = belief_.relative_basis_std();
        const double scale = belief_.sigma * std::sqrt(static_cast<double>(M - state.m));
        for (std::size_t i = 0; i < n; ++i) {
            CounterRng rng(seed_, Stream::belief_mc, static_cast<std::uint64_t>(detail::McTag::root_retry), key, i);
            const double r = std::exp(scale * rng.normal());
            const double z2 = rng.normal();
            const double e_next = belief_.has_basis() ? rho * e + std::sqrt(1.0 - rho * rho) * b * z2 : 0.0;
            a[i] = s * r * (1.0 + e_next);
            f[i] = r * t.best_cost(state.k + 1, 0, 0, e_next);
        }
        const Moments mo =
            detail::retry_moments(params_.alpha, detail::sample_moments(a), detail::sample_moments(f));
        sd_retry = q * mid * std::sqrt(mo.variance);
        // Same cost expression as the table so exact ties survive.
        d.u_retry = held - q * mid * (mo.mean + params_.lambda * std::sqrt(mo.variance));
    }
    // Close is priced off the quote, the other options off the mid, so
    // equal values can differ by rounding at the scale of the position.
    const double tol = 1e-12 * (std::abs(held) + q * mid);
    d.action = choose_action(d.u_close, d.u_retry, d.u_wait, tol);
    switch (d.action) {
        case Action::close: out.value = d.u_close; break;
        case Action::retry: out.value = d.u_retry; out.value_sd = sd_retry; break;
        case Action::wait: out.value = d.u_wait; out.value_sd = sd_wait; break;
    }
    return out;
}

std::vector<double> FallbackSolver::failure_path_values(const Opportunity& opp, std::uint64_t key) const {
    const int M = belief_.subslots;
    const double s = sign_of(opp.direction);
    const double q = opp.q;
    const double entry = opp.entry_price();
    const double beta = belief_.beta_halfspread;
    const double rho = belief_.basis_persistence;
    const double b = belief_.relative_basis_std();
    const FallbackTable& t = table(opp.direction);
    const double mid0 = opp.market.mid();
    const double e0 = observed_basis(opp.market);

    std::vector<double> values(static_cast<std::size_t>(params_.n_paths));
    for (std::size_t i = 0; i < values.size(); ++i) {
        CounterRng rng(seed_, Stream::belief_mc, static_cast<std::uint64_t>(detail::McTag::entry_path), key, i);
        double mid = mid0 * std::exp(belief_.sigma * rng.normal());
        double e = e0;
        int k = 1, m = first_fallback_subslot(M), w = 0;
        double exit = 0.0;
        for (;;) {
            const Action act = k >= params_.k_max ? Action::close : t.at(k, m, w, e).action;
            if (act == Action::close) {
                exit = mid * (1.0 + s * beta);
                break;
            }
            if (act == Action::wait) {
                mid *= std::exp(belief_.sigma * rng.normal());
                ++m;
                ++w;
                continue;
            }
            mid *= std::exp(belief_.sigma * std::sqrt(static_cast<double>(M - m)) * rng.normal());
            const double z2 = rng.normal();
            e = belief_.has_basis() ? rho * e + std::sqrt(1.0 - rho * rho) * b * z2 : 0.0;
            if (rng.bernoulli(params_.alpha)) {
                exit = mid * (1.0 + e);
                break;
            }
            ++k;
            m = 0;
            w = 0;
        }
        values[i] = leg_profit(opp.direction, q, entry, exit);
    }
    return values;
}

Moments FallbackSolver::failure_moments(const Opportunity& opp, std::uint64_t key) const {
    const auto v = failure_path_values(opp, key);
    return detail::sample_moments(v);
}

EntryEvaluation FallbackSolver::evaluate_entry(const Opportunity& opp, std::uint64_t key) const {
    return entry_value(opp.x_success(), failure_moments(opp, key), params_);
}

FallbackResult solve_fallback(const FallbackState& state, const AgentParams& params, const BeliefModel& belief,
                              double mid, std::uint64_t seed) {
    FallbackSolver solver(params, belief, seed, false);
    const double half = belief.beta_halfspread * mid;
    MarketSnapshot market{mid - half, mid + half, mid};
    FallbackResult r;
    r.root = solver.solve(state, market, 0);
    r.policy = solver.table(state.direction);
    return r;
}

Episode::Episode(std::uint64_t id, const Opportunity& opp, std::int64_t failed_at, bool simple, int subslots)
    : id_(id), simple_(simple), next_second_(failed_at + 1) {
    state_.k = 1;
    state_.m = first_fallback_subslot(subslots);
    state_.waits_used = 0;
    state_.q = opp.q;
    state_.entry_price = opp.entry_price();
    state_.direction = opp.direction;
}

void Episode::close_at(std::int64_t second, const MarketSnapshot& market, const char* tag, const Decision* d) {
    pnl_ = leg_profit(state_.direction, state_.q, state_.entry_price,
                      close_price(state_.direction, market.bid, market.ask));
    TraceEntry e{second, state_.k, state_.m, tag, pnl_, 0.0, 0.0, pnl_};
    if (d) {
        e.u_retry = d->u_retry;
        e.u_wait = d->u_wait;
    }
    trace_.push_back(std::move(e));
    phase_ = Phase::done;
}

Action Episode::decide(const FallbackSolver* solver, const MarketSnapshot& market) {
    if (simple_ || solver == nullptr) {
        close_at(next_second_, market, "close", nullptr);
        return Action::close;
    }
    const bool forced = state_.k >= solver->params().k_max;
    const auto sol = solver->solve(state_, market, stream_key(id_, Stream::belief_mc, 0, static_cast<std::uint64_t>(decisions_++)));
    const Decision& d = sol.decision;
    if (d.action == Action::close) {
        close_at(next_second_, market, forced ? "forced_close" : "close", &d);
        return Action::close;
    }
    trace_.push_back({next_second_, state_.k, state_.m, to_string(d.action), d.u_close, d.u_retry, d.u_wait, 0.0});
    if (d.action == Action::wait) {
        ++state_.m;
        ++state_.waits_used;
        ++next_second_;
    } else {
        next_second_ += solver->belief().subslots - state_.m;
        phase_ = Phase::landing;
    }
    return d.action;
}

void Episode::resolve_landing(bool landed, double dex_price, const MarketSnapshot& market) {
    (void)market;
    if (landed) {
        pnl_ = leg_profit(state_.direction, state_.q, state_.entry_price, dex_price);
        trace_.push_back({next_second_, state_.k, state_.m, "retry_land", 0.0, 0.0, 0.0, pnl_});
        phase_ = Phase::done;
        return;
    }
    trace_.push_back({next_second_, state_.k, state_.m, "retry_fail", 0.0, 0.0, 0.0, 0.0});
    ++state_.k;
    state_.m = 0;
    state_.waits_used = 0;
    phase_ = Phase::decide;
}

void Episode::force_close(std::int64_t second, const MarketSnapshot& market) {
    if (phase_ == Phase::done) return;
    next_second_ = second;
    close_at(second, market, "forced_close", nullptr);
}

AgentOutcome risk_averse_agent_step(const Opportunity& opp, std::int64_t second, const FallbackSolver& solver,
                                    MarketCallbacks& market, std::uint64_t id) {
    AgentOutcome out;
    if (market.lands(second, 0)) {
        out.landed = true;
        out.realized_pnl = opp.x_success();
        out.trace.push_back({second, 0, 0, "land", 0.0, 0.0, 0.0, out.realized_pnl});
        return out;
    }
    out.trace.push_back({second, 0, 0, "fail", 0.0, 0.0, 0.0, 0.0});
    Episode ep(id, opp, second, false, solver.belief().subslots);
    std::uint64_t attempt = 1;
    while (ep.phase() != Episode::Phase::done) {
        const std::int64_t t = ep.next_second();
        const MarketSnapshot snap = market.at(t);
        if (ep.phase() == Episode::Phase::decide) {
            ep.decide(&solver, snap);
        } else {
            ep.resolve_landing(market.lands(t, attempt++), snap.dex, snap);
        }
    }
    out.realized_pnl = ep.pnl();
    out.trace.insert(out.trace.end(), ep.trace().begin(), ep.trace().end());
    return out;
}

}  // namespace subslot
