#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "subslot/agents.hpp"
#include "subslot/amm_pool.hpp"
#include "subslot/market_data.hpp"
#include "subslot/price_engine.hpp"

namespace subslot {

struct RegimeConfig {
    int tau = 12;   // seconds between DEX execution points
    int delta = 1;  // decision step, seconds

    int subslots() const noexcept { return tau / delta; }
    bool is_execution_point(std::int64_t second) const noexcept { return second % tau == 0; }
    void validate() const;

    static RegimeConfig slow() { return {12, 1}; }
    static RegimeConfig fast() { return {1, 1}; }
};

enum class AgentModel { simple, risk_averse };
const char* to_string(AgentModel m) noexcept;

/// Everything a run reads from the outside world, prepared once and shared
/// read-only by every run of a seed.
struct MarketInputs {
    std::vector<TickQuote> cex;  // one quote per second, t = 0..horizon
    ReversionModel reversion;
    NoiseDistribution noise;
    CalibrationConstants calibration;
    double reference_mid = 0.0;
};

struct SyntheticConfig {
    std::int64_t slots = 2000;
    double sigma = 1e-4;
    double beta_halfspread = 5e-6;
    double p0 = 3000.0;
    std::int64_t window_seconds = 300;
    SyntheticDexParams dex;
    NoiseDistribution noise = default_noise_distribution();

    static NoiseDistribution default_noise_distribution();
};

MarketInputs synthetic_inputs(const SyntheticConfig& cfg, std::uint64_t seed);

// Recorded data: ticks and DEX prices are aligned to 1 s by LOCF over their
// common range, reversion is fitted on the aligned series.
MarketInputs recorded_inputs(std::span<const TickQuote> ticks, std::span<const DexPrice> dex,
                             NoiseDistribution noise, std::int64_t window_seconds = 300);

struct ExperimentConfig {
    RegimeConfig regime;
    EngineConfig engine;  // engine.seed is the run seed
    double fee = 0.003;
    double base_reserve = 1000.0;
    AgentModel agent = AgentModel::simple;
    AgentParams params;
    std::int64_t slots = 2000;
    std::shared_ptr<const MarketInputs> inputs;
    bool parallel_tables = false;
    bool record_events = true;
    bool record_trace = false;
    bool record_path = false;

    void validate() const;
    std::string label() const;
};

struct AgentMetrics {
    std::int64_t txn_count = 0;
    double eth_volume = 0.0;
    double usdc_volume = 0.0;
    double pnl = 0.0;

    bool operator==(const AgentMetrics&) const = default;
};

struct RunMetrics {
    AgentMetrics agent1;
    AgentMetrics agent2;
    std::int64_t opportunities = 0;
    std::int64_t attempts = 0;   // opportunities Agent 1 went for
    std::int64_t declined = 0;
    std::int64_t agent1_landed = 0;
    std::int64_t agent2_landed = 0;
    std::int64_t episodes = 0;
    std::int64_t retries_landed = 0;
    std::int64_t invariant_drops = 0;  // pool x*y decreases; must stay 0
    std::int64_t seconds_run = 0;
    bool truncated = false;

    bool operator==(const RunMetrics&) const = default;
};

struct TraceRow {
    std::int64_t slot = 0;
    int subslot = 0;
    TraceEntry entry;
};

struct RunResult {
    RunMetrics metrics;
    std::vector<std::string> events;  // NDJSON lines
    std::vector<TraceRow> trace;
    std::vector<SubslotPricePath> path;
};

std::optional<Opportunity> detect_opportunity(const PoolState& pool, const TickQuote& quote);

/// One run as a clock over 1-second steps. Each call to run_slot advances a
/// whole 12-second block; execution points inside it depend on the regime.
class Simulation {
public:
    explicit Simulation(ExperimentConfig config);

    std::int64_t horizon_slots() const noexcept { return horizon_slots_; }
    std::int64_t next_slot() const noexcept { return next_slot_; }
    const PoolState& pool() const noexcept { return pool_; }
    const RunMetrics& metrics() const noexcept { return result_.metrics; }

    // False once the horizon is reached.
    bool run_slot();
    // Force-closes open episodes at the horizon and hands back the result.
    RunResult finish();

private:
    struct OpenEpisode {
        Episode episode;
        std::uint64_t attempts = 0;
        std::size_t traced = 0;
    };

    void step_second(std::int64_t s);
    void resolve_landings(std::int64_t s);
    void compete(std::int64_t s);
    void run_decisions(std::int64_t s);
    void settle(OpenEpisode& e, std::int64_t s);
    void take_trace(OpenEpisode& e);
    void set_pool(const PoolState& next);
    MarketSnapshot snapshot(std::int64_t s) const;
    void push_event(std::string line);

    ExperimentConfig config_;
    PriceEngine engine_;
    std::optional<FallbackSolver> solver_;
    PoolState pool_;
    double price_ = 0.0;
    unsigned pending_tags_ = kCarry;
    std::int64_t horizon_slots_ = 0;
    std::int64_t next_slot_ = 0;
    std::vector<OpenEpisode> open_;
    RunResult result_;
    bool finished_ = false;
};

RunResult run_experiment(const ExperimentConfig& config);

void write_events(const RunResult& r, const std::string& path);
void write_trace_csv(const RunResult& r, const std::string& path);

// Recomputes Agent 1's metrics from an event log alone.
AgentMetrics replay_agent1(const std::vector<std::string>& events);

}  // namespace subslot
