#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

#include "subslot/report.hpp"

namespace subslot {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw std::invalid_argument(fmt::format("unknown key '{}' in {}", key, where));
    }
}

template <typename T>
void read(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

std::array<double, kTierCount> read_triple(const json& j, const char* what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != kTierCount) throw std::invalid_argument(fmt::format("{} needs exactly three values", what));
    return {v[0], v[1], v[2]};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string slug(const ExperimentConfig& c, std::uint64_t seed, bool robustness) {
    std::string s = fmt::format("seed{}_{}{}_{}_tau{}_fee{}", seed, c.engine.reversion_enabled ? "rev" : "norev",
                                c.engine.noise_enabled ? "_noise" : "_nonoise", to_string(c.agent), c.regime.tau,
                                std::lround(c.fee * 1e4));
    if (robustness) s += fmt::format("_a{:.2f}_l{:.2f}", c.params.alpha, c.params.lambda);
    return s;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << content;
}

}  // namespace

void MatrixConfig::validate() const {
    if (seeds.empty()) throw std::invalid_argument("matrix needs at least one seed");
    if (slots < 1) throw std::invalid_argument("matrix needs at least one slot per run");
    for (double f : fee_tiers) {
        if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument(fmt::format("fee tier {} outside [0, 1)", f));
    }
    if (!(base_reserve > 0.0)) throw std::invalid_argument("base_reserve must be positive");
    params.validate();
    weights.validate();
    if (ticks_path.has_value() != dex_path.has_value()) {
        throw std::invalid_argument("recorded data needs both 'ticks' and 'dex' paths");
    }
}

MatrixConfig parse_matrix_config(const std::string& json_text, const std::filesystem::path& base_dir) {
    const json j = json::parse(json_text);
    reject_unknown(j,
                   {"seeds", "slots", "fees_bp", "base_reserve", "agent", "weights", "data", "output_dir",
                    "robustness", "write_event_logs"},
                   "config");
    MatrixConfig c;
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        if (s.is_array()) {
            c.seeds = s.get<std::vector<std::uint64_t>>();
        } else {
            const auto n = s.get<std::uint64_t>();
            c.seeds.clear();
            for (std::uint64_t i = 1; i <= n; ++i) c.seeds.push_back(i);
        }
    }
    read(j, "slots", c.slots);
    if (j.contains("fees_bp")) {
        auto bp = read_triple(j.at("fees_bp"), "fees_bp");
        for (std::size_t i = 0; i < kTierCount; ++i) c.fee_tiers[i] = bp[i] * 1e-4;
    }
    read(j, "base_reserve", c.base_reserve);
    if (j.contains("agent")) {
        const auto& a = j.at("agent");
        reject_unknown(a, {"alpha", "lambda", "theta", "k_max", "m_retry_guard", "wait_max", "n_paths"}, "agent");
        read(a, "alpha", c.params.alpha);
        read(a, "lambda", c.params.lambda);
        read(a, "theta", c.params.theta);
        read(a, "k_max", c.params.k_max);
        read(a, "m_retry_guard", c.params.m_retry_guard);
        read(a, "wait_max", c.params.wait_max);
        read(a, "n_paths", c.params.n_paths);
    }
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        reject_unknown(w, {"txn", "volume"}, "weights");
        if (w.contains("txn")) c.weights.txn = read_triple(w.at("txn"), "weights.txn");
        if (w.contains("volume")) c.weights.volume = read_triple(w.at("volume"), "weights.volume");
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown(d, {"ticks", "dex", "noise", "synthetic"}, "data");
        if (d.contains("ticks")) c.ticks_path = resolve(base_dir, d.at("ticks").get<std::string>());
        if (d.contains("dex")) c.dex_path = resolve(base_dir, d.at("dex").get<std::string>());
        if (d.contains("noise")) c.noise_path = resolve(base_dir, d.at("noise").get<std::string>());
        if (d.contains("synthetic")) {
            const auto& s = d.at("synthetic");
            reject_unknown(s, {"sigma", "beta_halfspread", "p0", "window_seconds", "dex_follow", "dex_pull",
                               "dex_noise_std"},
                           "data.synthetic");
            read(s, "sigma", c.synthetic.sigma);
            read(s, "beta_halfspread", c.synthetic.beta_halfspread);
            read(s, "p0", c.synthetic.p0);
            read(s, "window_seconds", c.synthetic.window_seconds);
            read(s, "dex_follow", c.synthetic.dex.follow);
            read(s, "dex_pull", c.synthetic.dex.pull);
            read(s, "dex_noise_std", c.synthetic.dex.noise_std);
        }
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    read(j, "robustness", c.robustness);
    read(j, "write_event_logs", c.write_event_logs);
    c.validate();
    return c;
}

MatrixConfig load_matrix_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot read config {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_matrix_config(ss.str(), path.parent_path());
    } catch (const json::exception& e) {
        throw std::invalid_argument(fmt::format("{}: {}", path.string(), e.what()));
    }
}

MatrixResult run_matrix(const MatrixConfig& config, bool parallel) {
    config.validate();
    std::vector<std::shared_ptr<const MarketInputs>> inputs;
    std::shared_ptr<const MarketInputs> recorded;
    NoiseDistribution noise = config.noise_path ? load_distribution(*config.noise_path) : config.synthetic.noise;
    if (config.ticks_path) {
        const auto ticks = load_ticks(*config.ticks_path);
        const auto dex = load_dex_prices(*config.dex_path);
        recorded = std::make_shared<const MarketInputs>(
            recorded_inputs(ticks, dex, noise, config.synthetic.window_seconds));
    }
    for (auto seed : config.seeds) {
        if (recorded) {
            inputs.push_back(recorded);
        } else {
            SyntheticConfig sc = config.synthetic;
            sc.slots = config.slots;
            sc.noise = noise;
            inputs.push_back(std::make_shared<const MarketInputs>(synthetic_inputs(sc, seed)));
        }
    }

    std::vector<RunRecord> jobs;
    auto add = [&](std::size_t seed_idx, AgentModel agent, EngineToggles t, double fee, RegimeConfig regime,
                   AgentParams params, bool robustness) {
        RunRecord r;
        r.seed = config.seeds[seed_idx];
        r.robustness = robustness;
        auto& c = r.config;
        c.regime = regime;
        c.engine.reversion_enabled = t.reversion;
        c.engine.noise_enabled = t.noise;
        c.engine.window_seconds = config.synthetic.window_seconds;
        c.engine.seed = r.seed;
        c.fee = fee;
        c.base_reserve = config.base_reserve;
        c.agent = agent;
        c.params = params;
        c.slots = config.slots;
        c.inputs = inputs[seed_idx];
        c.record_events = config.write_event_logs;
        jobs.push_back(std::move(r));
    };
    for (std::size_t si = 0; si < config.seeds.size(); ++si) {
        for (AgentModel agent : {AgentModel::simple, AgentModel::risk_averse})
            for (const auto& t : kConfigurations)
                for (double fee : config.fee_tiers)
                    for (const auto& regime : {RegimeConfig::slow(), RegimeConfig::fast()})
                        add(si, agent, t, fee, regime, config.params, false);
        if (config.robustness) {
            for (double a : config.robustness_alpha)
                for (double l : config.robustness_lambda)
                    for (double fee : config.fee_tiers)
                        for (const auto& regime : {RegimeConfig::slow(), RegimeConfig::fast()}) {
                            AgentParams p = config.params;
                            p.alpha = a;
                            p.lambda = l;
                            add(si, AgentModel::risk_averse, {true, true}, fee, regime, p, true);
                        }
        }
    }

    std::vector<std::string> errors(jobs.size());
    const long n = static_cast<long>(jobs.size());
    auto run_one = [&](long i) {
        try {
            auto res = run_experiment(jobs[i].config);
            jobs[i].metrics = res.metrics;
            jobs[i].events = std::move(res.events);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long i = 0; i < n; ++i) run_one(i);
    } else {
        for (long i = 0; i < n; ++i) run_one(i);
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!errors[i].empty()) {
            throw std::runtime_error(fmt::format("run failed [{}]: {}", jobs[i].config.label(), errors[i]));
        }
    }

    MatrixResult result;
    result.report = build_report(config, jobs);
    result.runs = std::move(jobs);
    return result;
}

DeltaReport build_report(const MatrixConfig& config, std::span<const RunRecord> runs) {
    DeltaReport rep;
    rep.fee_tiers = config.fee_tiers;
    rep.weights = config.weights;
    rep.seeds = config.seeds.size();
    rep.slots = config.slots;

    auto tier_of = [&](double fee) -> std::size_t {
        for (std::size_t i = 0; i < kTierCount; ++i) {
            if (config.fee_tiers[i] == fee) return i;
        }
        throw std::invalid_argument(fmt::format("run fee {} is not a configured tier", fee));
    };
    auto config_of = [](const EngineConfig& e) -> std::size_t {
        for (std::size_t i = 0; i < kConfigurationCount; ++i) {
            if (kConfigurations[i].reversion == e.reversion_enabled && kConfigurations[i].noise == e.noise_enabled)
                return i;
        }
        return 0;
    };
    struct Acc {
        MetricMeans sum;
        std::size_t n = 0;
        void add(const AgentMetrics& m) {
            sum.pnl += m.pnl;
            sum.eth += m.eth_volume;
            sum.usdc += m.usdc_volume;
            sum.txn += static_cast<double>(m.txn_count);
            ++n;
        }
        MetricMeans mean() const {
            const double k = n ? static_cast<double>(n) : 1.0;
            return {sum.pnl / k, sum.eth / k, sum.usdc / k, sum.txn / k};
        }
    };
    // (agent, configuration, tier, fast) and (alpha, lambda, tier, fast)
    std::map<std::tuple<int, std::size_t, std::size_t, bool>, Acc> main;
    std::map<std::tuple<double, double, std::size_t, bool>, Acc> robust;
    for (const auto& r : runs) {
        const auto& c = r.config;
        const bool fast = c.regime.tau == 1;
        const std::size_t tier = tier_of(c.fee);
        if (r.robustness) {
            robust[{c.params.alpha, c.params.lambda, tier, fast}].add(r.metrics.agent1);
        } else {
            main[{static_cast<int>(c.agent), config_of(c.engine), tier, fast}].add(r.metrics.agent1);
        }
    }
    for (AgentModel agent : {AgentModel::simple, AgentModel::risk_averse}) {
        for (std::size_t cfg = 0; cfg < kConfigurationCount; ++cfg) {
            std::array<MetricDelta, kTierCount> per_pool;
            for (std::size_t tier = 0; tier < kTierCount; ++tier) {
                PoolEntry e;
                e.agent = agent;
                e.configuration = cfg;
                e.tier = tier;
                e.slow = main[{static_cast<int>(agent), cfg, tier, false}].mean();
                e.fast = main[{static_cast<int>(agent), cfg, tier, true}].mean();
                e.delta = delta_between(e.slow, e.fast);
                per_pool[tier] = e.delta;
                rep.pools.push_back(e);
            }
            rep.combined.push_back({agent, cfg, aggregate_weighted(per_pool, rep.weights)});
        }
    }
    for (const auto& [key, acc] : robust) {
        const auto& [alpha, lambda, tier, fast] = key;
        if (fast) continue;
        const auto& fast_acc = robust.at({alpha, lambda, tier, true});
        rep.robustness.push_back({alpha, lambda, tier, delta_between(acc.mean(), fast_acc.mean())});
    }
    return rep;
}

void write_artifacts(const MatrixResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto tables = render_tables(result.report);
    write_file(dir / "tables.txt", tables.text);
    write_file(dir / "tables.csv", tables.csv);
    write_file(dir / "raw_metrics.csv", raw_metrics_csv(result.runs));
    bool any_events = false;
    for (const auto& r : result.runs) any_events = any_events || !r.events.empty();
    if (!any_events) return;
    const auto events_dir = dir / "events";
    std::filesystem::create_directories(events_dir);
    for (const auto& r : result.runs) {
        std::string body;
        for (const auto& line : r.events) body += line + '\n';
        write_file(events_dir / (slug(r.config, r.seed, r.robustness) + ".ndjson"), body);
    }
}

}  // namespace subslot
