#include "subslot/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>
#include <json.hpp>

namespace subslot {

using nlohmann::json;

namespace {

constexpr std::int64_t kMsPerSecond = 1000;

json quote_json(const MarketSnapshot& m) { return {{"bid", m.bid}, {"ask", m.ask}, {"dex", m.dex}}; }

std::vector<double> mids_of(std::span<const TickQuote> ticks) {
    std::vector<double> out;
    out.reserve(ticks.size());
    for (const auto& t : ticks) out.push_back(t.mid());
    return out;
}

std::uint64_t solver_seed(std::uint64_t seed) { return stream_key(seed, Stream::belief_mc, 0xF00D); }

}  // namespace

void RegimeConfig::validate() const {
    if (delta < 1 || tau < 1) throw std::invalid_argument("regime tau and delta must be positive");
    if (tau % delta != 0) throw std::invalid_argument(fmt::format("tau {} not divisible by delta {}", tau, delta));
    if (kSubslotsPerBlock % tau != 0) {
        throw std::invalid_argument(fmt::format("tau {} must divide the {}-second block", tau, kSubslotsPerBlock));
    }
}

const char* to_string(AgentModel m) noexcept { return m == AgentModel::simple ? "simple" : "risk_averse"; }

NoiseDistribution SyntheticConfig::default_noise_distribution() {
    NoiseDistribution d;
    d.count_pmf = {{0, 0.35}, {1, 0.35}, {2, 0.2}, {3, 0.1}};
    double total = 0.0;
    for (int bp = -kMaxImpactBp; bp <= kMaxImpactBp; ++bp) total += std::exp(-std::abs(bp) / 5.0);
    for (int bp = -kMaxImpactBp; bp <= kMaxImpactBp; ++bp) d.impact_pmf[bp] = std::exp(-std::abs(bp) / 5.0) / total;
    return d;
}

MarketInputs synthetic_inputs(const SyntheticConfig& cfg, std::uint64_t seed) {
    if (cfg.slots < 1) throw std::invalid_argument("synthetic horizon needs at least one slot");
    MarketInputs in;
    in.cex = synth_cex(seed, cfg.slots * kSubslotsPerBlock, cfg.sigma, cfg.beta_halfspread, cfg.p0);
    const auto dex = synth_dex_reference(seed, in.cex, cfg.dex);
    std::vector<double> dex_prices;
    dex_prices.reserve(dex.size());
    for (const auto& d : dex) dex_prices.push_back(d.price);
    const auto mids = mids_of(in.cex);
    in.reversion = fit_reversion(simple_returns(mids), simple_returns(dex_prices), cfg.window_seconds);
    in.noise = cfg.noise;
    in.calibration = calibrate(in.cex, dex);
    in.reference_mid = mids.front();
    return in;
}

MarketInputs recorded_inputs(std::span<const TickQuote> ticks, std::span<const DexPrice> dex,
                             NoiseDistribution noise, std::int64_t window_seconds) {
    if (ticks.empty() || dex.empty()) throw DataError("recorded inputs need CEX ticks and DEX prices");
    const std::int64_t start = std::max(ticks.front().timestamp_ms, dex.front().timestamp_ms);
    const std::int64_t end = std::min(ticks.back().timestamp_ms, dex.back().timestamp_ms);
    if (end - start < kMsPerSecond) throw DataError("CEX and DEX series share less than one second");
    const auto count = static_cast<std::size_t>((end - start) / kMsPerSecond + 1);
    MarketInputs in;
    in.cex = align_ticks(ticks, start, count);
    const auto dex_prices = align_prices(dex, start, count);
    const auto mids = mids_of(in.cex);
    in.reversion = fit_reversion(simple_returns(mids), simple_returns(dex_prices), window_seconds);
    noise.validate();
    in.noise = std::move(noise);
    in.calibration = calibrate(ticks, dex);
    in.reference_mid = mids.front();
    return in;
}

void ExperimentConfig::validate() const {
    regime.validate();
    params.validate();
    if (!(fee >= 0.0 && fee < 1.0)) throw std::invalid_argument(fmt::format("fee {} outside [0, 1)", fee));
    if (!(base_reserve > 0.0)) throw std::invalid_argument("base_reserve must be positive");
    if (slots < 1) throw std::invalid_argument("horizon needs at least one slot");
    if (!inputs || inputs->cex.empty()) throw std::invalid_argument("experiment has no market inputs");
}

std::string ExperimentConfig::label() const {
    return fmt::format("{} / {} / tau={}s / fee={}bp / seed={}", configuration_name(engine.reversion_enabled,
                                                                                  engine.noise_enabled),
                       to_string(agent), regime.tau, std::lround(fee * 1e4), engine.seed);
}

std::optional<Opportunity> detect_opportunity(const PoolState& pool, const TickQuote& quote) {
    const auto sizing = optimal_arb_size(pool, quote.bid, quote.ask);
    if (!sizing || !(sizing->amount_in > 0.0)) return std::nullopt;
    const auto swap = execute_swap(pool, sizing->side, sizing->amount_in);
    Opportunity o;
    o.direction = sizing->side == SwapSide::buy_base ? TradeDirection::buy_dex : TradeDirection::sell_dex;
    o.q = swap.base_amount();
    o.market = {quote.bid, quote.ask, pool.spot_price()};
    o.sizing = *sizing;
    return o;
}

namespace {

std::string event_line(std::int64_t s, const char* kind, json payload) {
    json rec;
    rec["timestamp"] = s * kMsPerSecond;
    rec["slot"] = s / kSubslotsPerBlock;
    rec["subslot"] = s % kSubslotsPerBlock;
    rec["event_kind"] = kind;
    rec["payload"] = std::move(payload);
    return rec.dump();
}

}  // namespace

Simulation::Simulation(ExperimentConfig config)
    : config_((config.validate(), std::move(config))),
      engine_(config_.engine, mids_of(config_.inputs->cex), config_.inputs->reversion, config_.inputs->noise) {
    const std::int64_t available = engine_.horizon_seconds() / kSubslotsPerBlock;
    horizon_slots_ = std::min(config_.slots, available);
    if (horizon_slots_ < config_.slots) result_.metrics.truncated = true;
    if (horizon_slots_ < 1) throw DataError("market data shorter than one slot");
    if (config_.agent == AgentModel::risk_averse) {
        const auto belief = BeliefModel::from_calibration(config_.inputs->calibration, config_.inputs->reference_mid,
                                                          config_.regime.subslots());
        solver_.emplace(config_.params, belief, solver_seed(config_.engine.seed), config_.parallel_tables);
    }
    price_ = config_.inputs->cex.front().mid();
    pool_ = PoolState::with_liquidity(config_.base_reserve, price_, config_.fee);
    push_event(event_line(0, "run_start",
                          {{"label", config_.label()},
                           {"alpha", config_.params.alpha},
                           {"lambda", config_.params.lambda},
                           {"slots", horizon_slots_},
                           {"base_reserve", pool_.base_reserve},
                           {"quote_reserve", pool_.quote_reserve}}));
    if (result_.metrics.truncated) {
        push_event(event_line(0, "truncated", {{"requested_slots", config_.slots}, {"available_slots", horizon_slots_}}));
    }
}

void Simulation::push_event(std::string line) {
    if (config_.record_events) result_.events.push_back(std::move(line));
}

MarketSnapshot Simulation::snapshot(std::int64_t s) const {
    const auto& q = config_.inputs->cex[static_cast<std::size_t>(s)];
    return {q.bid, q.ask, price_};
}

void Simulation::set_pool(const PoolState& next) {
    if (next.invariant() < pool_.invariant()) ++result_.metrics.invariant_drops;
    pool_ = next;
    price_ = pool_.spot_price();
}

bool Simulation::run_slot() {
    if (next_slot_ >= horizon_slots_) return false;
    const std::int64_t first = next_slot_ * kSubslotsPerBlock;
    for (std::int64_t s = first; s < first + kSubslotsPerBlock; ++s) step_second(s);
    ++next_slot_;
    return next_slot_ < horizon_slots_;
}

void Simulation::step_second(std::int64_t s) {
    if (s > 0) {
        const auto r = engine_.step(price_, s);
        price_ = r.price;
        pending_tags_ |= r.provenance;
    }
    if (config_.record_path) {
        const std::int64_t slot = s / kSubslotsPerBlock;
        if (s % kSubslotsPerBlock == 0) {
            if (!result_.path.empty()) result_.path.back().next_boundary_price = price_;
            result_.path.push_back({slot, {}, {}, 0.0});
        }
        result_.path.back().prices.push_back(price_);
        result_.path.back().provenance.push_back(pending_tags_);
    }
    pending_tags_ = kCarry;
    if (config_.regime.is_execution_point(s)) {
        if (price_ != pool_.spot_price()) set_pool(pool_.repriced(price_));
        resolve_landings(s);
        compete(s);
    }
    run_decisions(s);
    result_.metrics.seconds_run = s + 1;
}

void Simulation::take_trace(OpenEpisode& e) {
    const auto& t = e.episode.trace();
    for (; e.traced < t.size(); ++e.traced) {
        const auto& row = t[e.traced];
        if (config_.record_trace) {
            result_.trace.push_back({row.second / kSubslotsPerBlock, static_cast<int>(row.second % kSubslotsPerBlock), row});
        }
        if (row.action == "wait" || row.action == "retry") {
            push_event(event_line(row.second, "fallback",
                                  {{"episode", e.episode.id()},
                                   {"k", row.k},
                                   {"m", row.m},
                                   {"action", row.action},
                                   {"u_close", row.u_close},
                                   {"u_retry", row.u_retry},
                                   {"u_wait", row.u_wait}}));
        }
    }
}

void Simulation::settle(OpenEpisode& e, std::int64_t s) {
    auto& m = result_.metrics.agent1;
    m.pnl += e.episode.pnl();
    const auto& last = e.episode.trace().back();
    push_event(event_line(s, "agent1_close",
                          {{"episode", e.episode.id()},
                           {"pnl", e.episode.pnl()},
                           {"k", last.k},
                           {"m", last.m},
                           {"forced", last.action == "forced_close"}}));
}

void Simulation::resolve_landings(std::int64_t s) {
    for (auto& e : open_) {
        auto& ep = e.episode;
        if (ep.phase() != Episode::Phase::landing || ep.next_second() != s) continue;
        CounterRng rng(config_.engine.seed, Stream::retry_landing, static_cast<std::uint64_t>(s), ep.id(), e.attempts++);
        const bool landed = rng.bernoulli(config_.params.alpha);
        const MarketSnapshot snap = snapshot(s);
        if (!landed) {
            ep.resolve_landing(false, price_, snap);
            take_trace(e);
            push_event(event_line(s, "retry_fail", {{"episode", ep.id()}, {"k", ep.state().k - 1}}));
            continue;
        }
        const double q = ep.state().q;
        const double pre = pool_.spot_price();
        SwapResult swap;
        if (ep.state().direction == TradeDirection::buy_dex) {
            swap = execute_swap(pool_, SwapSide::buy_base, amount_in_for_output(pool_, SwapSide::buy_base, q));
        } else {
            swap = execute_swap(pool_, SwapSide::sell_base, q);
        }
        ep.resolve_landing(true, pre, snap);
        take_trace(e);
        set_pool(swap.pool);
        pending_tags_ |= kArb;
        auto& m = result_.metrics.agent1;
        ++m.txn_count;
        m.eth_volume += q;
        m.usdc_volume += swap.quote_amount();
        m.pnl += ep.pnl();
        ++result_.metrics.retries_landed;
        push_event(event_line(s, "retry_land",
                              {{"episode", ep.id()},
                               {"pnl", ep.pnl()},
                               {"eth", q},
                               {"usdc", swap.quote_amount()},
                               {"pool_x", pool_.base_reserve},
                               {"pool_y", pool_.quote_reserve}}));
    }
}

void Simulation::compete(std::int64_t s) {
    const auto& quote = config_.inputs->cex[static_cast<std::size_t>(s)];
    const auto opp = detect_opportunity(pool_, quote);
    if (!opp) return;
    auto& metrics = result_.metrics;
    ++metrics.opportunities;

    bool attempt = true;
    json entry = nullptr;
    if (solver_) {
        const auto eval = solver_->evaluate_entry(*opp, static_cast<std::uint64_t>(s));
        attempt = eval.enter;
        entry = {{"utility", eval.utility}, {"mean", eval.total.mean}, {"sd", eval.std_dev()}};
    }
    // One draw per opportunity; Agent 2's fate is its complement.
    CounterRng rng(config_.engine.seed, Stream::arb_landing, static_cast<std::uint64_t>(s));
    const bool agent1_lands = rng.bernoulli(config_.params.alpha) && attempt;

    const auto swap = execute_swap(pool_, opp->sizing.side, opp->sizing.amount_in);
    const double x_s = opp->x_success();
    push_event(event_line(s, "opportunity",
                          {{"direction", to_string(opp->direction)},
                           {"q", opp->q},
                           {"quote", quote_json(opp->market)},
                           {"x_success", x_s},
                           {"attempt", attempt},
                           {"entry", entry}}));

    AgentMetrics& winner = agent1_lands ? metrics.agent1 : metrics.agent2;
    ++winner.txn_count;
    winner.eth_volume += opp->q;
    winner.usdc_volume += swap.quote_amount();
    winner.pnl += x_s;
    if (agent1_lands) {
        ++metrics.attempts;
        ++metrics.agent1_landed;
        const double loss = simple_failure_profit(*opp, quote.bid, quote.ask);
        metrics.agent2.pnl += loss;
        push_event(event_line(s, "agent1_land",
                              {{"pnl", x_s}, {"eth", opp->q}, {"usdc", swap.quote_amount()}}));
        push_event(event_line(s, "agent2_close", {{"pnl", loss}}));
    } else {
        ++metrics.agent2_landed;
        push_event(event_line(s, "agent2_land",
                              {{"pnl", x_s}, {"eth", opp->q}, {"usdc", swap.quote_amount()}}));
        if (attempt) {
            ++metrics.attempts;
            ++metrics.episodes;
            open_.push_back({Episode(static_cast<std::uint64_t>(s), *opp, s, !solver_, config_.regime.subslots()), 0, 0});
            push_event(event_line(s, "agent1_fail", {{"episode", s}}));
        } else {
            ++metrics.declined;
        }
    }
    set_pool(swap.pool);
    pending_tags_ |= kArb;
}

void Simulation::run_decisions(std::int64_t s) {
    for (auto& e : open_) {
        auto& ep = e.episode;
        if (ep.phase() != Episode::Phase::decide || ep.next_second() != s) continue;
        ep.decide(solver_ ? &*solver_ : nullptr, snapshot(s));
        take_trace(e);
        if (ep.phase() == Episode::Phase::done) settle(e, s);
    }
    std::erase_if(open_, [](const OpenEpisode& e) { return e.episode.phase() == Episode::Phase::done; });
}

RunResult Simulation::finish() {
    if (finished_) throw std::logic_error("simulation already finished");
    while (run_slot()) {
    }
    finished_ = true;
    const std::int64_t end = horizon_slots_ * kSubslotsPerBlock;
    for (auto& e : open_) {
        e.episode.force_close(end, snapshot(end));
        take_trace(e);
        settle(e, end);
    }
    open_.clear();
    if (config_.record_path && !result_.path.empty()) result_.path.back().next_boundary_price = price_;
    const auto& m = result_.metrics;
    push_event(event_line(end, "run_end",
                          {{"opportunities", m.opportunities},
                           {"agent1_txn", m.agent1.txn_count},
                           {"agent1_pnl", m.agent1.pnl},
                           {"agent1_eth", m.agent1.eth_volume},
                           {"agent1_usdc", m.agent1.usdc_volume},
                           {"agent2_txn", m.agent2.txn_count},
                           {"truncated", m.truncated}}));
    return std::move(result_);
}

RunResult run_experiment(const ExperimentConfig& config) {
    Simulation sim(config);
    return sim.finish();
}

void write_events(const RunResult& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path));
    for (const auto& line : r.events) out << line << '\n';
}

void write_trace_csv(const RunResult& r, const std::string& path) {
    auto out = fmt::output_file(path);
    out.print("slot,subslot,k,action,u_close,u_retry,u_wait,realized_pnl\n");
    for (const auto& row : r.trace) {
        const auto& e = row.entry;
        out.print("{},{},{},{},{},{},{},{}\n", row.slot, row.subslot, e.k, e.action, e.u_close, e.u_retry, e.u_wait,
                  e.realized_pnl);
    }
}

AgentMetrics replay_agent1(const std::vector<std::string>& events) {
    AgentMetrics m;
    for (const auto& line : events) {
        const auto rec = json::parse(line);
        const auto kind = rec.at("event_kind").get<std::string>();
        const auto& p = rec.at("payload");
        if (kind == "agent1_land" || kind == "retry_land") {
            ++m.txn_count;
            m.eth_volume += p.at("eth").get<double>();
            m.usdc_volume += p.at("usdc").get<double>();
            m.pnl += p.at("pnl").get<double>();
        } else if (kind == "agent1_close") {
            m.pnl += p.at("pnl").get<double>();
        }
    }
    return m;
}

}  // namespace subslot
