#include "subslot/price_engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

namespace subslot {

const ReversionInterval& ReversionModel::interval_for_second(std::int64_t second) const {
    if (intervals.empty()) throw std::logic_error("reversion model has no intervals");
    const std::int64_t k = std::max<std::int64_t>(second - 1, 0) / window_seconds;
    return intervals[static_cast<std::size_t>(std::min<std::int64_t>(k, std::ssize(intervals) - 1))];
}

std::vector<double> simple_returns(std::span<const double> prices) {
    std::vector<double> out;
    if (prices.size() < 2) return out;
    out.reserve(prices.size() - 1);
    for (std::size_t i = 1; i < prices.size(); ++i) out.push_back((prices[i] - prices[i - 1]) / prices[i - 1]);
    return out;
}

ReversionModel fit_reversion(std::span<const double> cex_returns, std::span<const double> dex_returns,
                             std::int64_t window_seconds) {
    if (cex_returns.size() != dex_returns.size()) {
        throw std::invalid_argument(fmt::format("return series lengths differ ({} vs {})",
                                                cex_returns.size(), dex_returns.size()));
    }
    if (window_seconds < 1) throw std::invalid_argument("window_seconds must be positive");
    ReversionModel model;
    model.window_seconds = window_seconds;
    const std::size_t n = cex_returns.size();
    const auto w = static_cast<std::size_t>(window_seconds);
    for (std::size_t lo = 0; lo < n; lo += w) {
        const std::size_t hi = std::min(lo + w, n);
        const auto x = cex_returns.subspan(lo, hi - lo);
        const auto y = dex_returns.subspan(lo, hi - lo);
        const double count = static_cast<double>(x.size());
        double x_mean = 0.0, y_mean = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            x_mean += x[i];
            y_mean += y[i];
        }
        x_mean /= count;
        y_mean /= count;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sxx += (x[i] - x_mean) * (x[i] - x_mean);
            sxy += (x[i] - x_mean) * (y[i] - y_mean);
        }

        ReversionInterval fit;
        fit.points = x.size();
        if (x.size() < 2 || sxx == 0.0) {
            if (!model.intervals.empty()) {
                fit = model.intervals.back();
                fit.points = x.size();
            } else {
                fit.beta0 = y_mean;
                fit.beta1 = 0.0;
            }
            fit.carried_forward = true;
        } else {
            fit.beta1 = sxy / sxx;
            fit.beta0 = y_mean - fit.beta1 * x_mean;
            if (x.size() > 2) {
                double ssr = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const double e = y[i] - fit.beta0 - fit.beta1 * x[i];
                    ssr += e * e;
                }
                fit.residual_variance = ssr / (count - 2.0);
            }
        }
        model.intervals.push_back(fit);
    }
    return model;
}

RevertResult revert_step(const ReversionInterval& coeffs, double last_dex, double cex_return,
                         double floor_fraction) {
    const double predicted = last_dex * (1.0 + coeffs.beta0 + coeffs.beta1 * cex_return);
    if (predicted > 0.0) return {predicted, false};
    return {floor_fraction * last_dex, true};
}

namespace {

int draw_from(const std::map<int, double>& pmf, double u) {
    double acc = 0.0;
    for (auto [k, p] : pmf) {
        acc += p;
        if (u < acc) return k;
    }
    return pmf.rbegin()->first;
}

}  // namespace

std::vector<NoiseTrade> sample_noise_trades(const NoiseDistribution& dist, int subslots,
                                            std::uint64_t seed, std::int64_t block) {
    std::vector<NoiseTrade> trades;
    if (dist.empty() || dist.count_pmf.empty()) return trades;
    CounterRng count_rng(seed, Stream::noise_count, static_cast<std::uint64_t>(block));
    const int count = draw_from(dist.count_pmf, count_rng.uniform());
    CounterRng place_rng(seed, Stream::noise_placement, static_cast<std::uint64_t>(block));
    CounterRng impact_rng(seed, Stream::noise_impact, static_cast<std::uint64_t>(block));
    trades.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int m = std::min(static_cast<int>(place_rng.uniform() * subslots), subslots - 1);
        trades.push_back({m, draw_from(dist.impact_pmf, impact_rng.uniform())});
    }
    std::stable_sort(trades.begin(), trades.end(),
                     [](const NoiseTrade& a, const NoiseTrade& b) { return a.subslot < b.subslot; });
    return trades;
}

double apply_impact(double price, int impact_bp) noexcept { return price * (1.0 + impact_bp * 1e-4); }

std::string configuration_name(bool reversion, bool noise) {
    return fmt::format("{}, {}", reversion ? "reversion" : "no reversion", noise ? "noise" : "no noise");
}

std::string provenance_label(unsigned tags) {
    if (tags == kCarry) return "carry";
    std::string out;
    auto add = [&](unsigned bit, const char* name) {
        if (!(tags & bit)) return;
        if (!out.empty()) out += '+';
        out += name;
    };
    add(kArb, "arb");
    add(kReversion, "reversion");
    add(kNoise, "noise");
    return out;
}

PriceEngine::PriceEngine(EngineConfig config, std::vector<double> cex_mid, ReversionModel reversion,
                         NoiseDistribution noise)
    : config_(config), cex_mid_(std::move(cex_mid)), reversion_(std::move(reversion)), noise_(std::move(noise)) {
    if (cex_mid_.empty()) throw std::invalid_argument("price engine needs a CEX path");
    if (config_.reversion_enabled && reversion_.intervals.empty()) {
        throw std::invalid_argument("reversion enabled without a fitted model");
    }
    const std::int64_t horizon = horizon_seconds();
    std::vector<std::vector<int>> by_second(static_cast<std::size_t>(horizon) + 1);
    if (config_.noise_enabled && !noise_.empty()) {
        const std::int64_t blocks = (horizon + kSubslotsPerBlock - 1) / kSubslotsPerBlock;
        for (std::int64_t b = 0; b < blocks; ++b) {
            for (const auto& t : sample_noise_trades(noise_, kSubslotsPerBlock, config_.seed, b)) {
                const std::int64_t s = b * kSubslotsPerBlock + t.subslot + 1;
                if (s <= horizon) by_second[static_cast<std::size_t>(s)].push_back(t.impact_bp);
            }
        }
    }
    noise_offsets_.reserve(by_second.size() + 1);
    noise_offsets_.push_back(0);
    for (const auto& v : by_second) {
        noise_impacts_.insert(noise_impacts_.end(), v.begin(), v.end());
        noise_offsets_.push_back(noise_impacts_.size());
    }
}

std::span<const int> PriceEngine::noise_at(std::int64_t second) const {
    if (second < 0 || second > horizon_seconds()) return {};
    const auto s = static_cast<std::size_t>(second);
    return std::span<const int>(noise_impacts_).subspan(noise_offsets_[s], noise_offsets_[s + 1] - noise_offsets_[s]);
}

double PriceEngine::cex_return(std::int64_t second) const {
    const auto s = static_cast<std::size_t>(second);
    return (cex_mid_[s] - cex_mid_[s - 1]) / cex_mid_[s - 1];
}

StepResult PriceEngine::step(double price, std::int64_t second) const {
    if (second < 1 || second > horizon_seconds()) {
        throw std::out_of_range(fmt::format("second {} outside [1, {}]", second, horizon_seconds()));
    }
    StepResult r{price, kCarry, false};
    if (config_.reversion_enabled) {
        const auto rev = revert_step(reversion_.interval_for_second(second), r.price, cex_return(second));
        r.price = rev.price;
        r.clamped = rev.clamped;
        r.provenance |= kReversion;
    }
    if (config_.noise_enabled) {
        for (int bp : noise_at(second)) {
            r.price = apply_impact(r.price, bp);
            r.provenance |= kNoise;
        }
    }
    return r;
}

SubslotPricePath build_subslot_path(double boundary_price, std::span<const ArbFill> fills,
                                    const PriceEngine& engine, std::int64_t slot, int subslots) {
    SubslotPricePath path;
    path.slot = slot;
    path.prices.reserve(static_cast<std::size_t>(subslots));
    path.provenance.reserve(static_cast<std::size_t>(subslots));
    path.prices.push_back(boundary_price);
    path.provenance.push_back(kCarry);

    auto fill_at = [&](int m) -> const ArbFill* {
        const ArbFill* found = nullptr;
        for (const auto& f : fills) {
            if (f.subslot == m) found = &f;
        }
        return found;
    };
    // Price carried out of subslot m-1: post-fill if an arb landed there.
    auto advance = [&](int m) {
        double base = path.prices.back();
        unsigned tags = kCarry;
        if (const auto* f = fill_at(m - 1)) {
            base = f->post_price;
            tags |= kArb;
        }
        auto r = engine.step(base, slot * subslots + m);
        r.provenance |= tags;
        return r;
    };
    for (int m = 1; m < subslots; ++m) {
        auto r = advance(m);
        path.prices.push_back(r.price);
        path.provenance.push_back(r.provenance);
    }
    path.next_boundary_price = advance(subslots).price;
    return path;
}

void write_path_csv(std::span<const SubslotPricePath> paths, const std::string& path) {
    auto out = fmt::output_file(path);
    out.print("slot,subslot,price,provenance\n");
    for (const auto& p : paths) {
        for (std::size_t m = 0; m < p.prices.size(); ++m) {
            out.print("{},{},{},{}\n", p.slot, m, p.prices[m], provenance_label(p.provenance[m]));
        }
    }
}

std::vector<TickQuote> synth_cex(std::uint64_t seed, std::int64_t n_seconds, double sigma,
                                 double beta_halfspread, double p0, std::int64_t start_ms) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
    if (!(p0 > 0.0)) throw std::invalid_argument("p0 must be positive");
    std::vector<TickQuote> out;
    out.reserve(static_cast<std::size_t>(n_seconds) + 1);
    CounterRng rng(seed, Stream::cex_path);
    double mid = p0;
    for (std::int64_t i = 0; i <= n_seconds; ++i) {
        if (i > 0) mid *= std::exp(sigma * rng.normal());
        out.push_back({start_ms + i * 1000, (1.0 - beta_halfspread) * mid, (1.0 + beta_halfspread) * mid});
    }
    return out;
}

std::vector<DexPrice> synth_dex_reference(std::uint64_t seed, std::span<const TickQuote> cex,
                                          const SyntheticDexParams& params) {
    std::vector<DexPrice> out;
    if (cex.empty()) return out;
    out.reserve(cex.size());
    CounterRng rng(seed, Stream::dex_reference);
    double log_dex = std::log(cex.front().mid());
    out.push_back({cex.front().timestamp_ms, cex.front().mid()});
    for (std::size_t i = 1; i < cex.size(); ++i) {
        const double prev_mid = std::log(cex[i - 1].mid());
        const double r = std::log(cex[i].mid()) - prev_mid;
        log_dex += params.follow * r + params.pull * (prev_mid - log_dex) + params.noise_std * rng.normal();
        out.push_back({cex[i].timestamp_ms, std::exp(log_dex)});
    }
    return out;
}

}  // namespace subslot
