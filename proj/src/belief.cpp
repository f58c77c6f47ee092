#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "subslot/agents.hpp"

namespace subslot {

void AgentParams::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument(fmt::format("alpha {} outside [0, 1]", alpha));
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
    if (n_paths < 1) throw std::invalid_argument("n_paths must be at least 1");
    if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
    if (m_retry_guard < 0) throw std::invalid_argument("m_retry_guard must be non-negative");
    if (wait_max < 0) throw std::invalid_argument("wait_max must be non-negative");
}

BeliefModel BeliefModel::from_calibration(const CalibrationConstants& c, double reference_mid, int subslots) {
    BeliefModel b;
    b.sigma = c.sigma;
    b.beta_halfspread = c.beta_halfspread;
    b.basis_std = c.basis_std;
    b.basis_persistence = c.basis_persistence;
    b.reference_mid = reference_mid;
    b.subslots = subslots;
    b.validate();
    return b;
}

void BeliefModel::validate() const {
    if (!(sigma >= 0.0)) throw std::invalid_argument("belief sigma must be non-negative");
    if (!(beta_halfspread >= 0.0 && beta_halfspread < 1.0)) throw std::invalid_argument("belief beta outside [0, 1)");
    if (!(basis_std >= 0.0)) throw std::invalid_argument("belief basis_std must be non-negative");
    if (!(std::abs(basis_persistence) < 1.0)) throw std::invalid_argument("belief |basis_persistence| must be < 1");
    if (!(reference_mid > 0.0)) throw std::invalid_argument("belief reference_mid must be positive");
    if (subslots < 1) throw std::invalid_argument("belief needs at least one subslot per slot");
}

const char* to_string(TradeDirection d) noexcept { return d == TradeDirection::buy_dex ? "buy_dex" : "sell_dex"; }

const char* to_string(Action a) noexcept {
    switch (a) {
        case Action::close: return "close";
        case Action::retry: return "retry";
        case Action::wait: return "wait";
    }
    return "?";
}

double Opportunity::entry_price() const noexcept {
    return direction == TradeDirection::buy_dex ? market.bid : market.ask;
}

double Opportunity::x_success() const noexcept { return leg_profit(direction, q, entry_price(), market.dex); }

double leg_profit(TradeDirection d, double q, double entry, double exit) noexcept {
    return sign_of(d) * q * (entry - exit);
}

double close_price(TradeDirection d, double bid, double ask) noexcept {
    return d == TradeDirection::buy_dex ? ask : bid;
}

double simple_success_profit(const Opportunity& opp) noexcept { return opp.x_success(); }

double simple_failure_profit(const Opportunity& opp, double bid_next, double ask_next) noexcept {
    return leg_profit(opp.direction, opp.q, opp.entry_price(), close_price(opp.direction, bid_next, ask_next));
}

bool retry_available(const AgentParams& p, int subslots, int k, int m) noexcept {
    const int guard = std::min(p.m_retry_guard, subslots);
    return k < p.k_max && m <= subslots - guard;
}

bool wait_available(const AgentParams& p, int subslots, int k, int m, int waits_used) noexcept {
    return k < p.k_max && m < subslots && waits_used < p.wait_max;
}

Action choose_action(double u_close, double u_retry, double u_wait, double tie_tolerance) noexcept {
    const double t = tie_tolerance;
    if (u_close + t >= u_retry && u_close + t >= u_wait) return Action::close;
    if (u_retry + t >= u_wait) return Action::retry;
    return Action::wait;
}

Moments mixture_moments(double alpha, double x_success, double failure_mean, double failure_variance) noexcept {
    const double gap = x_success - failure_mean;
    return {alpha * x_success + (1.0 - alpha) * failure_mean,
            alpha * (1.0 - alpha) * gap * gap + (1.0 - alpha) * failure_variance};
}

double EntryEvaluation::std_dev() const { return std::sqrt(total.variance); }

EntryEvaluation entry_value(double x_success, Moments failure, const AgentParams& params) {
    EntryEvaluation e;
    e.x_success = x_success;
    e.failure = failure;
    e.total = mixture_moments(params.alpha, x_success, failure.mean, failure.variance);
    e.utility = e.total.mean - params.lambda * std::sqrt(e.total.variance);
    e.enter = e.utility >= params.theta;
    return e;
}

}  // namespace subslot
