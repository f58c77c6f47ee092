#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "subslot/market_data.hpp"
#include "subslot/report.hpp"
#include "subslot/sim_engine.hpp"

using namespace subslot;
namespace fs = std::filesystem;

namespace {

int simulate(const fs::path& config_path, bool robustness, std::uint64_t n_seeds, const std::string& out_dir,
             bool serial, bool events) {
    auto cfg = load_matrix_config(config_path);
    if (robustness) cfg.robustness = true;
    if (events) cfg.write_event_logs = true;
    if (n_seeds > 0) {
        cfg.seeds.clear();
        for (std::uint64_t i = 1; i <= n_seeds; ++i) cfg.seeds.push_back(i);
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    const auto result = run_matrix(cfg, !serial);
    write_artifacts(result, cfg.output_dir);
    std::cout << render_tables(result.report).text;
    std::cerr << fmt::format("{} runs; artifacts in {}\n", result.runs.size(), cfg.output_dir.string());
    return 0;
}

struct SingleRunArgs {
    int tau = 12;
    std::string agent = "simple";
    double fee_bp = 5;
    bool reversion = false;
    bool noise = false;
    std::int64_t slots = 500;
    std::uint64_t seed = 1;
    double alpha = 0.35;
    double lambda = 0.01;
    std::string out = "run_out";
};

int run_single(const SingleRunArgs& a) {
    SyntheticConfig sc;
    sc.slots = a.slots;
    ExperimentConfig c;
    c.regime = {a.tau, 1};
    c.engine.reversion_enabled = a.reversion;
    c.engine.noise_enabled = a.noise;
    c.engine.seed = a.seed;
    c.fee = a.fee_bp * 1e-4;
    c.agent = a.agent == "simple" ? AgentModel::simple : AgentModel::risk_averse;
    c.params.alpha = a.alpha;
    c.params.lambda = a.lambda;
    c.slots = a.slots;
    c.inputs = std::make_shared<const MarketInputs>(synthetic_inputs(sc, a.seed));
    c.record_trace = true;
    c.record_path = true;
    const auto r = run_experiment(c);
    fs::create_directories(a.out);
    write_events(r, (fs::path(a.out) / "events.ndjson").string());
    write_trace_csv(r, (fs::path(a.out) / "fallback_trace.csv").string());
    write_path_csv(r.path, (fs::path(a.out) / "price_path.csv").string());
    const auto& m = r.metrics;
    std::cout << fmt::format("{}\nopportunities {}  agent1 txns {}  eth {:.6f}  usdc {:.2f}  pnl {:.6f}\n", c.label(),
                             m.opportunities, m.agent1.txn_count, m.agent1.eth_volume, m.agent1.usdc_volume,
                             m.agent1.pnl);
    return 0;
}

int classify(const fs::path& swaps_path, const fs::path& ticks_path, const fs::path& out_dir,
             std::optional<std::int64_t> ref_block, std::optional<std::int64_t> ref_ms, std::int64_t block_ms) {
    const auto swaps = load_swaps(swaps_path);
    const auto ticks = load_ticks(ticks_path);
    if (swaps.empty() || ticks.empty()) throw DataError("classify needs at least one swap and one tick");
    BlockClock clock;
    clock.reference_block = ref_block.value_or(swaps.front().block_number);
    clock.reference_ms = ref_ms.value_or(ticks.front().timestamp_ms);
    clock.block_ms = block_ms;
    const auto result = classify_swaps(swaps, ticks, clock);
    fs::create_directories(out_dir);
    write_labeled_swaps(result, out_dir / "labeled_swaps.csv");
    const auto dist = estimate_noise_distribution(result.labeled);
    save_distribution(dist, out_dir / "noise_distribution.json");
    std::size_t arbs = 0;
    for (const auto& l : result.labeled) arbs += l.label == SwapLabel::arbitrage;
    std::cout << fmt::format("{} swaps: {} arbitrage, {} noise, {} rejected\n", swaps.size(), arbs,
                             result.labeled.size() - arbs, result.rejected.size());
    for (const auto& r : result.rejected) {
        std::cerr << fmt::format("rejected block {} index {}: {}\n", r.swap.block_number, r.swap.index_in_block,
                                 r.reason);
    }
    return 0;
}

int calibrate_cmd(const fs::path& ticks_path, const fs::path& dex_path, const fs::path& out) {
    const auto ticks = load_ticks(ticks_path);
    const auto dex = load_dex_prices(dex_path);
    const auto c = calibrate(ticks, dex);
    save_calibration(c, out);
    std::cout << fmt::format("sigma {:.6g}  beta {:.6g}  basis_std {:.6g}  persistence {:.6g}\n", c.sigma,
                             c.beta_halfspread, c.basis_std, c.basis_persistence);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Slot versus subslot CEX-DEX arbitrage simulator"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "Run the experiment matrix and write delta tables");
    fs::path config_path;
    bool robustness = false, serial = false, events = false;
    std::uint64_t n_seeds = 0;
    std::string out_dir;
    sim->add_option("--config", config_path, "JSON matrix configuration")->required()->check(CLI::ExistingFile);
    sim->add_flag("--robustness", robustness, "Add the alpha x lambda grid for the risk-averse agent");
    sim->add_option("--seeds", n_seeds, "Use seeds 1..N");
    sim->add_option("--out", out_dir, "Output directory");
    sim->add_flag("--serial", serial, "Run the matrix without OpenMP");
    sim->add_flag("--events", events, "Write per-run event logs");

    auto* run = app.add_subcommand("run", "One synthetic run with event log, fallback trace and price path");
    SingleRunArgs ra;
    run->add_option("--tau", ra.tau, "Execution interval in seconds (12 or 1)")->check(CLI::IsMember({1, 2, 3, 4, 6, 12}));
    run->add_option("--agent", ra.agent)->check(CLI::IsMember({"simple", "risk_averse"}));
    run->add_option("--fee-bp", ra.fee_bp);
    run->add_flag("--reversion", ra.reversion);
    run->add_flag("--noise", ra.noise);
    run->add_option("--slots", ra.slots);
    run->add_option("--seed", ra.seed);
    run->add_option("--alpha", ra.alpha);
    run->add_option("--lambda", ra.lambda);
    run->add_option("--out", ra.out);

    auto* cls = app.add_subcommand("classify", "Label swaps as arbitrage or noise and fit the noise model");
    fs::path swaps_path, ticks_path, cls_out;
    std::optional<std::int64_t> ref_block, ref_ms;
    std::int64_t block_ms = 12'000;
    cls->add_option("--swaps", swaps_path)->required()->check(CLI::ExistingFile);
    cls->add_option("--ticks", ticks_path)->required()->check(CLI::ExistingFile);
    cls->add_option("--out", cls_out)->required();
    cls->add_option("--reference-block", ref_block, "Block pinned to --reference-ms (default: first swap)");
    cls->add_option("--reference-ms", ref_ms, "Wall-clock ms of the reference block (default: first tick)");
    cls->add_option("--block-ms", block_ms, "Block cadence in ms");

    auto* cal = app.add_subcommand("calibrate", "Estimate belief-model constants from CEX and DEX series");
    fs::path cal_ticks, cal_dex, cal_out;
    cal->add_option("--ticks", cal_ticks)->required()->check(CLI::ExistingFile);
    cal->add_option("--dex", cal_dex)->required()->check(CLI::ExistingFile);
    cal->add_option("--out", cal_out)->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim) return simulate(config_path, robustness, n_seeds, out_dir, serial, events);
        if (*run) return run_single(ra);
        if (*cls) return classify(swaps_path, ticks_path, cls_out, ref_block, ref_ms, block_ms);
        if (*cal) return calibrate_cmd(cal_ticks, cal_dex, cal_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
