#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subslot/sim_engine.hpp"

namespace subslot {

inline constexpr std::size_t kTierCount = 3;
inline constexpr std::size_t kConfigurationCount = 4;

// Fee tiers in table order: 30, 5 and 1 basis points.
inline constexpr std::array<double, kTierCount> kDefaultFeeTiers{0.0030, 0.0005, 0.0001};

struct EngineToggles {
    bool reversion = false;
    bool noise = false;
};
inline constexpr std::array<EngineToggles, kConfigurationCount> kConfigurations{
    {{false, false}, {false, true}, {true, false}, {true, true}}};

struct WeightVector {
    std::array<double, kTierCount> txn{0.037, 0.331, 0.632};
    std::array<double, kTierCount> volume{0.286, 0.503, 0.211};

    void validate() const;
};

// Percent changes from the 12-second to the 1-second regime. NaN marks a
// zero baseline (rendered as n/a).
struct MetricDelta {
    double pnl = 0.0;
    double eth = 0.0;
    double usdc = 0.0;
    double txn = 0.0;
};

// Agent-1 metrics averaged over seeds.
struct MetricMeans {
    double pnl = 0.0;
    double eth = 0.0;
    double usdc = 0.0;
    double txn = 0.0;

    static MetricMeans of(const AgentMetrics& m) noexcept;
};

double percent_change(double slow, double fast) noexcept;
MetricDelta delta_between(const MetricMeans& slow, const MetricMeans& fast) noexcept;

struct CombinedDelta {
    double eth = 0.0;
    double usdc = 0.0;
    double txn = 0.0;
};

// Txn deltas weighted by txn shares, volume deltas by volume shares.
CombinedDelta aggregate_weighted(std::span<const MetricDelta, kTierCount> per_pool, const WeightVector& weights);

struct PoolEntry {
    AgentModel agent = AgentModel::simple;
    std::size_t configuration = 0;
    std::size_t tier = 0;
    MetricMeans slow;
    MetricMeans fast;
    MetricDelta delta;
};

struct CombinedEntry {
    AgentModel agent = AgentModel::simple;
    std::size_t configuration = 0;
    CombinedDelta delta;
};

struct RobustnessEntry {
    double alpha = 0.0;
    double lambda = 0.0;
    std::size_t tier = 0;
    MetricDelta delta;
};

struct DeltaReport {
    std::array<double, kTierCount> fee_tiers = kDefaultFeeTiers;
    WeightVector weights;
    std::size_t seeds = 0;
    std::int64_t slots = 0;
    std::vector<PoolEntry> pools;
    std::vector<CombinedEntry> combined;
    std::vector<RobustnessEntry> robustness;

    const PoolEntry& pool(AgentModel agent, std::size_t configuration, std::size_t tier) const;
    const CombinedEntry& combined_for(AgentModel agent, std::size_t configuration) const;
};

struct RenderedTables {
    std::string text;
    std::string csv;
};

RenderedTables render_tables(const DeltaReport& report);

// Matrix configuration, read from a JSON document.
struct MatrixConfig {
    std::vector<std::uint64_t> seeds{1};
    std::int64_t slots = 500;
    std::array<double, kTierCount> fee_tiers = kDefaultFeeTiers;
    double base_reserve = 1000.0;
    AgentParams params;
    WeightVector weights;
    SyntheticConfig synthetic;
    std::optional<std::filesystem::path> ticks_path;
    std::optional<std::filesystem::path> dex_path;
    std::optional<std::filesystem::path> noise_path;
    std::filesystem::path output_dir = "out";
    bool robustness = false;
    bool write_event_logs = false;
    std::array<double, 3> robustness_alpha{0.20, 0.35, 0.50};
    std::array<double, 3> robustness_lambda{0.0, 0.01, 0.03};

    void validate() const;
};

MatrixConfig parse_matrix_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
MatrixConfig load_matrix_config(const std::filesystem::path& path);

struct RunRecord {
    ExperimentConfig config;
    std::uint64_t seed = 0;
    bool robustness = false;
    RunMetrics metrics;
    std::vector<std::string> events;
};

struct MatrixResult {
    DeltaReport report;
    std::vector<RunRecord> runs;  // fixed job order, independent of scheduling
};

// Every experiment of the matrix for every seed. The OpenMP path hands runs
// to a dynamic work pool; the serial path is the reference for it.
MatrixResult run_matrix(const MatrixConfig& config, bool parallel = true);

// Builds the report from run outputs alone.
DeltaReport build_report(const MatrixConfig& config, std::span<const RunRecord> runs);

void write_artifacts(const MatrixResult& result, const std::filesystem::path& dir);

std::string raw_metrics_csv(std::span<const RunRecord> runs);

}  // namespace subslot
