#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "subslot/amm_pool.hpp"
#include "subslot/market_data.hpp"

namespace subslot {

struct AgentParams {
    double alpha = 0.35;    // DEX-leg landing probability
    double lambda = 0.01;   // risk aversion on profit standard deviation
    double theta = 0.0;     // entry threshold
    int k_max = 3;          // failed attempts that force a close
    int m_retry_guard = 3;  // subslots that must remain for a retry
    int wait_max = 3;       // consecutive waits allowed
    int n_paths = 16;       // Monte-Carlo paths per node

    void validate() const;
};

/// The agent's model of future prices: log-normal mid walk at 1-second
/// steps, symmetric half-spread, and an AR(1) basis between DEX and CEX mid
/// that moves only at slot boundaries. The basis is carried in units of the
/// mid, using `reference_mid` to convert from price units.
struct BeliefModel {
    double sigma = 0.0;
    double beta_halfspread = 0.0;
    double basis_std = 0.0;
    double basis_persistence = 0.0;
    double reference_mid = 1.0;
    int subslots = 12;  // M = slot / decision step

    static BeliefModel from_calibration(const CalibrationConstants& c, double reference_mid, int subslots);

    bool has_basis() const noexcept { return basis_std > 0.0; }
    double relative_basis_std() const noexcept { return has_basis() ? basis_std / reference_mid : 0.0; }
    void validate() const;
};

enum class TradeDirection {
    buy_dex,   // pool cheap: sell on CEX at the bid, buy on the DEX
    sell_dex,  // pool rich: buy on CEX at the ask, sell on the DEX
};

inline int sign_of(TradeDirection d) noexcept { return d == TradeDirection::buy_dex ? 1 : -1; }
const char* to_string(TradeDirection d) noexcept;

struct MarketSnapshot {
    double bid = 0.0;
    double ask = 0.0;
    double dex = 0.0;

    double mid() const noexcept { return 0.5 * (bid + ask); }
};

struct Opportunity {
    TradeDirection direction = TradeDirection::buy_dex;
    double q = 0.0;  // base units the arbitrage trade moves
    MarketSnapshot market;
    ArbSizing sizing;

    // CEX price the agent trades at on entry: the bid when selling there.
    double entry_price() const noexcept;
    double x_success() const noexcept;
};

// Profit of a position opened at `entry` on the CEX and closed by trading
// `q` at `exit` (a CEX quote or the DEX price).
double leg_profit(TradeDirection d, double q, double entry, double exit) noexcept;

// CEX price at which an open position is closed: the ask when short.
double close_price(TradeDirection d, double bid, double ask) noexcept;

double simple_success_profit(const Opportunity& opp) noexcept;
double simple_failure_profit(const Opportunity& opp, double bid_next, double ask_next) noexcept;

enum class Action { close, retry, wait };
const char* to_string(Action a) noexcept;

struct FallbackState {
    int k = 1;  // failed attempts so far
    int m = 1;  // subslot within the current slot, 0..M
    int waits_used = 0;
    double q = 0.0;
    double entry_price = 0.0;
    TradeDirection direction = TradeDirection::buy_dex;
};

// Subslot of the first fallback node, one step after entry. With one
// subslot per slot that instant is the next slot's boundary, m = 0.
inline int first_fallback_subslot(int subslots) noexcept { return 1 % subslots; }

bool retry_available(const AgentParams& p, int subslots, int k, int m) noexcept;
bool wait_available(const AgentParams& p, int subslots, int k, int m, int waits_used) noexcept;

inline constexpr double kUnavailable = std::numeric_limits<double>::infinity();

struct Decision {
    Action action = Action::close;
    double u_close = 0.0;
    double u_retry = -kUnavailable;
    double u_wait = -kUnavailable;
    bool retry_available = false;
    bool wait_available = false;
};

// Close beats retry beats wait on equal utility. Utilities within
// `tie_tolerance` of each other count as equal.
Action choose_action(double u_close, double u_retry, double u_wait, double tie_tolerance = 0.0) noexcept;

/// Scale-free policy table for the fallback problem.
///
/// Every payoff is q * (entry - exit) with exit proportional to the current
/// mid, so a node's value is s*q*entry - q*mid*c(node, basis) where c is a
/// risk-adjusted exit cost per unit of mid. The table stores c for each
/// option on a grid of relative basis values, filled by backward induction
/// over k = k_max-1..0, m = M..0 with Monte-Carlo moments at every node.
class FallbackTable {
public:
    struct Cell {
        double close = 0.0;
        double retry = kUnavailable;
        double wait = kUnavailable;
        Action action = Action::close;

        double best() const noexcept;
        bool operator==(const Cell&) const = default;
    };

    FallbackTable() = default;
    FallbackTable(const AgentParams& params, const BeliefModel& belief, TradeDirection direction);

    int k_max() const noexcept { return k_max_; }
    int subslots() const noexcept { return subslots_; }
    int wait_max() const noexcept { return wait_max_; }
    TradeDirection direction() const noexcept { return direction_; }
    std::span<const double> grid() const noexcept { return grid_; }

    Cell& cell(int k, int m, int w, std::size_t j);
    const Cell& cell(int k, int m, int w, std::size_t j) const;

    // Terminal close cost s + beta: exit at ask (short) or bid (long).
    double close_cost() const noexcept { return close_cost_; }

    // Option costs at an arbitrary basis value (linear in the grid, clamped).
    Cell at(int k, int m, int w, double basis) const;
    double best_cost(int k, int m, int w, double basis) const;

    bool operator==(const FallbackTable&) const = default;

private:
    std::size_t index(int k, int m, int w, std::size_t j) const;

    int k_max_ = 0;
    int subslots_ = 0;
    int wait_max_ = 0;
    TradeDirection direction_ = TradeDirection::buy_dex;
    double close_cost_ = 0.0;
    std::vector<double> grid_;
    std::vector<Cell> cells_;
};

// Serial reference and OpenMP kernels; both produce bit-identical tables
// because every Monte-Carlo path draws from its own counter-keyed stream.
FallbackTable build_fallback_table_serial(const AgentParams& params, const BeliefModel& belief,
                                          TradeDirection direction, std::uint64_t seed);
FallbackTable build_fallback_table_omp(const AgentParams& params, const BeliefModel& belief,
                                       TradeDirection direction, std::uint64_t seed);

// Mean and variance of a 50/50-style mixture: success with probability
// alpha pays x_success, otherwise a draw from the failure distribution.
struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};
Moments mixture_moments(double alpha, double x_success, double failure_mean, double failure_variance) noexcept;

struct EntryEvaluation {
    double x_success = 0.0;
    Moments failure;
    Moments total;
    double utility = 0.0;
    bool enter = false;

    double std_dev() const;
};

EntryEvaluation entry_value(double x_success, Moments failure, const AgentParams& params);

struct FallbackSolution {
    Decision decision;
    double value = 0.0;     // risk-adjusted utility of the chosen action
    double value_sd = 0.0;  // std dev of the chosen action's payoff
};

/// Owns the per-direction policy tables for one run and answers root
/// decisions and entry-stage failure moments against them.
class FallbackSolver {
public:
    FallbackSolver(AgentParams params, BeliefModel belief, std::uint64_t seed, bool parallel = true);

    const AgentParams& params() const noexcept { return params_; }
    const BeliefModel& belief() const noexcept { return belief_; }
    const FallbackTable& table(TradeDirection d) const noexcept;

    // Relative basis the belief model sees in a market snapshot.
    double observed_basis(const MarketSnapshot& market) const noexcept;

    // Root decision at a realized node: close uses the quoted exit price,
    // retry and wait are estimated with n_paths belief paths.
    FallbackSolution solve(const FallbackState& state, const MarketSnapshot& market, std::uint64_t key) const;

    // Distribution of the fallback payoff X^f seen from entry time: paths
    // advance one step to the first fallback node and follow the table policy.
    std::vector<double> failure_path_values(const Opportunity& opp, std::uint64_t key) const;
    Moments failure_moments(const Opportunity& opp, std::uint64_t key) const;

    EntryEvaluation evaluate_entry(const Opportunity& opp, std::uint64_t key) const;

private:
    AgentParams params_;
    BeliefModel belief_;
    std::uint64_t seed_;
    FallbackTable buy_table_;
    FallbackTable sell_table_;
};

struct FallbackResult {
    FallbackSolution root;
    FallbackTable policy;
};

// One-shot solve from a fallback state under the belief model alone
// (close priced at the belief's ask/bid around `mid`).
FallbackResult solve_fallback(const FallbackState& state, const AgentParams& params, const BeliefModel& belief,
                              double mid, std::uint64_t seed);

struct TraceEntry {
    std::int64_t second = 0;
    int k = 0;
    int m = 0;
    std::string action;  // close / retry / wait / land / fail / retry_land / retry_fail / forced_close
    double u_close = 0.0;
    double u_retry = 0.0;
    double u_wait = 0.0;
    double realized_pnl = 0.0;
};

/// Fallback episode as a state machine driven by the simulation clock.
/// Decision nodes sit on the 1-second grid; a retry waits for the next
/// execution point, whose landing the driver resolves.
class Episode {
public:
    enum class Phase { decide, landing, done };

    Episode(std::uint64_t id, const Opportunity& opp, std::int64_t failed_at, bool simple, int subslots);

    std::uint64_t id() const noexcept { return id_; }
    Phase phase() const noexcept { return phase_; }
    std::int64_t next_second() const noexcept { return next_second_; }
    const FallbackState& state() const noexcept { return state_; }
    double pnl() const noexcept { return pnl_; }
    const std::vector<TraceEntry>& trace() const noexcept { return trace_; }

    // Decision at next_second(). The simple agent always closes.
    Action decide(const FallbackSolver* solver, const MarketSnapshot& market);

    // Resolves a pending retry at next_second(); `dex_price` is the pool
    // price the fill would trade at.
    void resolve_landing(bool landed, double dex_price, const MarketSnapshot& market);

    // Closes at the given quote regardless of policy (horizon end).
    void force_close(std::int64_t second, const MarketSnapshot& market);

private:
    void close_at(std::int64_t second, const MarketSnapshot& market, const char* tag, const Decision* d);

    std::uint64_t id_;
    bool simple_;
    FallbackState state_;
    Phase phase_ = Phase::decide;
    std::int64_t next_second_;
    std::int64_t decisions_ = 0;
    double pnl_ = 0.0;
    std::vector<TraceEntry> trace_;
};

// Drives one attempted opportunity to completion against a market oracle.
class MarketCallbacks {
public:
    virtual ~MarketCallbacks() = default;
    virtual MarketSnapshot at(std::int64_t second) = 0;
    virtual bool lands(std::int64_t second, std::uint64_t attempt) = 0;
};

struct AgentOutcome {
    bool landed = false;
    double realized_pnl = 0.0;
    std::vector<TraceEntry> trace;
};

AgentOutcome risk_averse_agent_step(const Opportunity& opp, std::int64_t second, const FallbackSolver& solver,
                                    MarketCallbacks& market, std::uint64_t id);

}  // namespace subslot
