#include "subslot/report.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace subslot {

namespace {

constexpr double kWeightTolerance = 1e-9;

std::string pct(double v) {
    if (!std::isfinite(v)) return "n/a";
    const long r = std::lround(v);
    return r > 0 ? fmt::format("+{}%", r) : fmt::format("{}%", r);
}

std::string pct_csv(double v) {
    if (!std::isfinite(v)) return "n/a";
    return fmt::format("{}", std::lround(v));
}

std::string tier_label(double fee) {
    const long bp = std::lround(fee * 1e4);
    return bp == 1 ? "1 bp" : fmt::format("{} bps", bp);
}

std::string agent_title(AgentModel a) { return a == AgentModel::simple ? "simple" : "risk-averse"; }

std::string csv_quote(const std::string& s) { return "\"" + s + "\""; }

}  // namespace

void WeightVector::validate() const {
    auto check = [](const std::array<double, kTierCount>& w, const char* name) {
        double sum = 0.0;
        for (double x : w) {
            if (!(x >= 0.0)) throw std::invalid_argument(fmt::format("{} weights must be non-negative", name));
            sum += x;
        }
        if (std::abs(sum - 1.0) > kWeightTolerance) {
            throw std::invalid_argument(fmt::format("{} weights sum to {}, expected 1", name, sum));
        }
    };
    check(txn, "txn");
    check(volume, "volume");
}

MetricMeans MetricMeans::of(const AgentMetrics& m) noexcept {
    return {m.pnl, m.eth_volume, m.usdc_volume, static_cast<double>(m.txn_count)};
}

double percent_change(double slow, double fast) noexcept {
    if (slow == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 100.0 * (fast - slow) / slow;
}

MetricDelta delta_between(const MetricMeans& slow, const MetricMeans& fast) noexcept {
    return {percent_change(slow.pnl, fast.pnl), percent_change(slow.eth, fast.eth),
            percent_change(slow.usdc, fast.usdc), percent_change(slow.txn, fast.txn)};
}

CombinedDelta aggregate_weighted(std::span<const MetricDelta, kTierCount> per_pool, const WeightVector& weights) {
    weights.validate();
    CombinedDelta c;
    for (std::size_t i = 0; i < kTierCount; ++i) {
        c.txn += weights.txn[i] * per_pool[i].txn;
        c.eth += weights.volume[i] * per_pool[i].eth;
        c.usdc += weights.volume[i] * per_pool[i].usdc;
    }
    return c;
}

const PoolEntry& DeltaReport::pool(AgentModel agent, std::size_t configuration, std::size_t tier) const {
    for (const auto& e : pools) {
        if (e.agent == agent && e.configuration == configuration && e.tier == tier) return e;
    }
    throw std::out_of_range("no pool entry for that agent/configuration/tier");
}

const CombinedEntry& DeltaReport::combined_for(AgentModel agent, std::size_t configuration) const {
    for (const auto& e : combined) {
        if (e.agent == agent && e.configuration == configuration) return e;
    }
    throw std::out_of_range("no combined entry for that agent/configuration");
}

RenderedTables render_tables(const DeltaReport& report) {
    if (report.pools.empty() || report.combined.empty()) throw std::invalid_argument("cannot render an empty report");
    RenderedTables out;
    auto& t = out.text;
    auto& c = out.csv;
    c = "Table,Agent,Pool,Configuration,ΔPnL,ΔETH Vol.,ΔUSDC Vol.,ΔTxns\n";

    constexpr auto row_fmt = "{:<24}{:>8}{:>12}{:>13}{:>9}\n";
    int table_no = 1;
    for (AgentModel agent : {AgentModel::simple, AgentModel::risk_averse}) {
        for (std::size_t tier = 0; tier < kTierCount; ++tier) {
            const std::string name = fmt::format("A{}", table_no++);
            t += fmt::format("Table {}: {} agent, {} pool, 12 s -> 1 s\n", name, agent_title(agent),
                             tier_label(report.fee_tiers[tier]));
            t += fmt::format(row_fmt, "Configuration", "ΔPnL", "ΔETH Vol.", "ΔUSDC Vol.", "ΔTxns");
            for (std::size_t cfg = 0; cfg < kConfigurationCount; ++cfg) {
                const auto& d = report.pool(agent, cfg, tier).delta;
                const auto label = configuration_name(kConfigurations[cfg].reversion, kConfigurations[cfg].noise);
                t += fmt::format(row_fmt, label, pct(d.pnl), pct(d.eth), pct(d.usdc), pct(d.txn));
                c += fmt::format("{},{},{},{},{},{},{},{}\n", name, agent_title(agent),
                                 tier_label(report.fee_tiers[tier]), csv_quote(label), pct_csv(d.pnl), pct_csv(d.eth),
                                 pct_csv(d.usdc), pct_csv(d.txn));
            }
            t += "\n";
        }
    }

    t += "Table A7: combined across pools (txn-weighted counts, volume-weighted volumes)\n";
    constexpr auto combo_fmt = "{:<24}{:>12}{:>9}{:>12}{:>9}\n";
    t += fmt::format(combo_fmt, "", "Simple", "", "Risk-averse", "");
    t += fmt::format(combo_fmt, "Configuration", "ΔETH Vol.", "ΔTxns", "ΔETH Vol.", "ΔTxns");
    for (std::size_t cfg = 0; cfg < kConfigurationCount; ++cfg) {
        const auto& s = report.combined_for(AgentModel::simple, cfg).delta;
        const auto& r = report.combined_for(AgentModel::risk_averse, cfg).delta;
        const auto label = configuration_name(kConfigurations[cfg].reversion, kConfigurations[cfg].noise);
        t += fmt::format(combo_fmt, label, pct(s.eth), pct(s.txn), pct(r.eth), pct(r.txn));
        for (const auto& [agent, d] : {std::pair{AgentModel::simple, s}, std::pair{AgentModel::risk_averse, r}}) {
            c += fmt::format("A7,{},combined,{},,{},{},{}\n", agent_title(agent), csv_quote(label), pct_csv(d.eth),
                             pct_csv(d.usdc), pct_csv(d.txn));
        }
    }
    // Noise configurations are 1 and 3 in table order.
    auto noise_mean = [&](AgentModel a, double CombinedDelta::*field) {
        return 0.5 * (report.combined_for(a, 1).delta.*field + report.combined_for(a, 3).delta.*field);
    };
    t += "\nMean of the two noise configurations (with and without reversion):\n";
    for (AgentModel agent : {AgentModel::simple, AgentModel::risk_averse}) {
        t += fmt::format("  {:<12} ΔETH Vol. {:>6}  ΔTxns {:>6}\n", agent_title(agent),
                         pct(noise_mean(agent, &CombinedDelta::eth)), pct(noise_mean(agent, &CombinedDelta::txn)));
    }

    if (!report.robustness.empty()) {
        t += "\nRobustness: risk-averse agent, reversion, noise\n";
        constexpr auto rob_fmt = "{:>6}{:>7}{:>10}{:>12}{:>9}\n";
        t += fmt::format(rob_fmt, "α", "λ", "Pool", "ΔETH Vol.", "ΔTxns");
        for (const auto& e : report.robustness) {
            t += fmt::format(rob_fmt, fmt::format("{:.2f}", e.alpha), fmt::format("{:.2f}", e.lambda),
                             tier_label(report.fee_tiers[e.tier]), pct(e.delta.eth), pct(e.delta.txn));
            c += fmt::format("R(α={:.2f};λ={:.2f}),risk-averse,{},{},{},{},{},{}\n", e.alpha, e.lambda,
                             tier_label(report.fee_tiers[e.tier]), csv_quote("reversion, noise"), pct_csv(e.delta.pnl),
                             pct_csv(e.delta.eth), pct_csv(e.delta.usdc), pct_csv(e.delta.txn));
        }
    }
    t += fmt::format("\n{} seed(s), {} slots per run\n", report.seeds, report.slots);
    return out;
}

std::string raw_metrics_csv(std::span<const RunRecord> runs) {
    std::string out =
        "seed,configuration,agent,tau,fee_bp,alpha,lambda,robustness,opportunities,attempts,declined,"
        "agent1_txn,agent1_eth,agent1_usdc,agent1_pnl,agent2_txn,agent2_eth,agent2_usdc,agent2_pnl,"
        "episodes,retries_landed,truncated\n";
    for (const auto& r : runs) {
        const auto& c = r.config;
        const auto& m = r.metrics;
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.seed,
                           csv_quote(configuration_name(c.engine.reversion_enabled, c.engine.noise_enabled)),
                           to_string(c.agent), c.regime.tau, std::lround(c.fee * 1e4), c.params.alpha,
                           c.params.lambda, r.robustness ? 1 : 0, m.opportunities, m.attempts, m.declined,
                           m.agent1.txn_count, m.agent1.eth_volume, m.agent1.usdc_volume, m.agent1.pnl,
                           m.agent2.txn_count, m.agent2.eth_volume, m.agent2.usdc_volume, m.agent2.pnl, m.episodes,
                           m.retries_landed, m.truncated ? 1 : 0);
    }
    return out;
}

}  // namespace subslot
