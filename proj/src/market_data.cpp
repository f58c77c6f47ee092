#include "subslot/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace subslot {

using nlohmann::json;

const char* to_string(SwapLabel label) noexcept {
    return label == SwapLabel::arbitrage ? "arbitrage" : "noise";
}

double discrepancy(double dex_price, double cex_reference) noexcept {
    return std::abs(dex_price - cex_reference) / cex_reference;
}

SwapLabel classify_swap(const SwapEvent& swap, double cex_reference) noexcept {
    const bool first_in_block = swap.index_in_block == 0;
    const bool pre_exceeds_fee = discrepancy(swap.pre_price, cex_reference) > swap.pool_fee;
    const bool moves_toward = std::abs(swap.post_price - cex_reference) <
                              std::abs(swap.pre_price - cex_reference);
    const bool post_at_least_fee = discrepancy(swap.post_price, cex_reference) >= swap.pool_fee;
    return first_in_block && pre_exceeds_fee && moves_toward && post_at_least_fee
               ? SwapLabel::arbitrage
               : SwapLabel::noise;
}

Classification classify_swaps(std::span<const SwapEvent> swaps, std::span<const TickQuote> cex,
                              const BlockClock& clock) {
    Classification out;
    out.labeled.reserve(swaps.size());
    for (const auto& swap : swaps) {
        const auto ts = clock.timestamp_of(swap.block_number);
        auto it = std::upper_bound(cex.begin(), cex.end(), ts,
                                   [](std::int64_t t, const TickQuote& q) { return t < q.timestamp_ms; });
        if (it == cex.begin()) {
            out.rejected.push_back(
                {swap, fmt::format("no CEX quote at or before block {} timestamp {} ms",
                                   swap.block_number, ts)});
            continue;
        }
        out.labeled.push_back({swap, classify_swap(swap, std::prev(it)->mid())});
    }
    return out;
}

void NoiseDistribution::validate() const {
    auto check = [](const std::map<int, double>& pmf, const char* name) {
        double total = 0.0;
        for (auto [k, p] : pmf) {
            if (!(p >= 0.0)) throw DataError(fmt::format("{}: negative mass at {}", name, k));
            total += p;
        }
        if (!pmf.empty() && std::abs(total - 1.0) > 1e-12) {
            throw DataError(fmt::format("{}: masses sum to {}, expected 1", name, total));
        }
    };
    check(count_pmf, "count_pmf");
    check(impact_pmf, "impact_pmf");
    if (count_pmf.empty()) throw DataError("count_pmf is empty");
    if (count_pmf.begin()->first < 0) throw DataError("count_pmf has negative support");
    for (auto [bp, p] : impact_pmf) {
        if (std::abs(bp) > kMaxImpactBp) {
            throw DataError(fmt::format("impact_pmf support {} bp outside [-30, 30]", bp));
        }
    }
}

int round_impact_bp(double pre_price, double post_price) noexcept {
    return static_cast<int>(std::lround((post_price - pre_price) / pre_price * 1e4));
}

NoiseDistribution estimate_noise_distribution(std::span<const LabeledSwap> labeled) {
    if (labeled.empty()) throw DataError("noise estimation needs at least one block");
    auto [lo, hi] = std::minmax_element(labeled.begin(), labeled.end(), [](const auto& a, const auto& b) {
        return a.swap.block_number < b.swap.block_number;
    });
    const std::int64_t first = lo->swap.block_number;
    const std::int64_t blocks = hi->swap.block_number - first + 1;

    // Every block in the observed range counts, including blocks without noise.
    std::vector<int> per_block(static_cast<std::size_t>(blocks), 0);
    std::map<int, std::int64_t> impact_counts;
    std::int64_t kept_impacts = 0;
    for (const auto& [swap, label] : labeled) {
        if (label != SwapLabel::noise) continue;
        ++per_block[static_cast<std::size_t>(swap.block_number - first)];
        const int bp = round_impact_bp(swap.pre_price, swap.post_price);
        if (std::abs(bp) > kMaxImpactBp) continue;
        ++impact_counts[bp];
        ++kept_impacts;
    }

    NoiseDistribution dist;
    std::map<int, std::int64_t> count_counts;
    for (int c : per_block) ++count_counts[c];
    for (auto [c, n] : count_counts) {
        dist.count_pmf[c] = static_cast<double>(n) / static_cast<double>(blocks);
    }
    if (kept_impacts == 0) {
        // No usable impacts: sampling treats this as "no noise".
        dist.count_pmf = {{0, 1.0}};
        return dist;
    }
    for (auto [bp, n] : impact_counts) {
        dist.impact_pmf[bp] = static_cast<double>(n) / static_cast<double>(kept_impacts);
    }
    return dist;
}

namespace {

json pmf_to_json(const std::map<int, double>& pmf) {
    json j = json::object();
    for (auto [k, p] : pmf) j[std::to_string(k)] = p;
    return j;
}

std::map<int, double> pmf_from_json(const json& j) {
    std::map<int, double> pmf;
    for (auto it = j.begin(); it != j.end(); ++it) pmf[std::stoi(it.key())] = it.value().get<double>();
    return pmf;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    out << text;
}

}  // namespace

std::string distribution_to_json(const NoiseDistribution& dist) {
    json j;
    j["kind"] = "noise_distribution";
    j["empty"] = dist.empty();
    j["count_pmf"] = pmf_to_json(dist.count_pmf);
    j["impact_pmf_bp"] = pmf_to_json(dist.impact_pmf);
    return j.dump(2) + "\n";
}

NoiseDistribution distribution_from_json(const std::string& text) {
    try {
        auto j = json::parse(text);
        NoiseDistribution dist;
        dist.count_pmf = pmf_from_json(j.at("count_pmf"));
        dist.impact_pmf = pmf_from_json(j.at("impact_pmf_bp"));
        dist.validate();
        return dist;
    } catch (const json::exception& e) {
        throw DataError(fmt::format("malformed distribution document: {}", e.what()));
    }
}

void save_distribution(const NoiseDistribution& dist, const std::filesystem::path& path) {
    write_text(path, distribution_to_json(dist));
}

NoiseDistribution load_distribution(const std::filesystem::path& path) {
    return distribution_from_json(read_text(path));
}

void CalibrationConstants::validate() const {
    if (!(sigma >= 0.0)) throw DataError("sigma must be non-negative");
    if (!(beta_halfspread >= 0.0 && beta_halfspread < 1.0)) {
        throw DataError("beta_halfspread must lie in [0, 1)");
    }
    if (!(basis_std >= 0.0)) throw DataError("basis_std must be non-negative");
    if (!(std::abs(basis_persistence) < 1.0)) throw DataError("|basis_persistence| must be < 1");
}

std::vector<TickQuote> align_ticks(std::span<const TickQuote> ticks, std::int64_t start_ms,
                                   std::size_t count, std::int64_t step_ms) {
    std::vector<TickQuote> out;
    out.reserve(count);
    std::size_t j = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const std::int64_t t = start_ms + static_cast<std::int64_t>(i) * step_ms;
        while (j < ticks.size() && ticks[j].timestamp_ms <= t) ++j;
        if (j == 0) throw DataError(fmt::format("no CEX quote at or before {} ms", t));
        out.push_back({t, ticks[j - 1].bid, ticks[j - 1].ask});
    }
    return out;
}

std::vector<double> align_prices(std::span<const DexPrice> prices, std::int64_t start_ms,
                                 std::size_t count, std::int64_t step_ms) {
    std::vector<double> out;
    out.reserve(count);
    std::size_t j = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const std::int64_t t = start_ms + static_cast<std::int64_t>(i) * step_ms;
        while (j < prices.size() && prices[j].timestamp_ms <= t) ++j;
        if (j == 0) throw DataError(fmt::format("no DEX price at or before {} ms", t));
        out.push_back(prices[j - 1].price);
    }
    return out;
}

namespace {

double sample_std(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

CalibrationConstants calibrate(std::span<const TickQuote> cex, std::span<const DexPrice> dex,
                               std::int64_t slot_seconds) {
    if (cex.size() < 2) throw DataError("calibration needs at least two CEX quotes");
    std::int64_t start = cex.front().timestamp_ms;
    std::int64_t end = cex.back().timestamp_ms;
    if (!dex.empty()) {
        start = std::max(start, dex.front().timestamp_ms);
        end = std::min(end, dex.back().timestamp_ms);
    }
    if (end < start) throw DataError("CEX and DEX series do not overlap");
    const auto count = static_cast<std::size_t>((end - start) / 1000 + 1);
    const auto grid = align_ticks(cex, start, count);

    CalibrationConstants c;
    std::vector<double> log_returns;
    log_returns.reserve(grid.size());
    double spread_sum = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        spread_sum += (grid[i].ask - grid[i].bid) / (grid[i].ask + grid[i].bid);
        if (i > 0) log_returns.push_back(std::log(grid[i].mid() / grid[i - 1].mid()));
    }
    c.sigma = sample_std(log_returns);
    c.beta_halfspread = spread_sum / static_cast<double>(grid.size());

    if (!dex.empty()) {
        const auto dex_grid = align_prices(dex, start, count);
        std::vector<double> basis;
        for (std::size_t i = 0; i < count; i += static_cast<std::size_t>(slot_seconds)) {
            basis.push_back(dex_grid[i] - grid[i].mid());
        }
        if (basis.size() >= 3) {
            c.basis_std = sample_std(basis);
            const double mean =
                std::accumulate(basis.begin(), basis.end(), 0.0) / static_cast<double>(basis.size());
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < basis.size(); ++i) {
                den += (basis[i] - mean) * (basis[i] - mean);
                if (i + 1 < basis.size()) num += (basis[i] - mean) * (basis[i + 1] - mean);
            }
            c.basis_persistence = den > 0.0 ? std::clamp(num / den, -0.999, 0.999) : 0.0;
        }
    }
    c.validate();
    return c;
}

void save_calibration(const CalibrationConstants& c, const std::filesystem::path& path) {
    json j;
    j["kind"] = "calibration";
    j["sigma"] = c.sigma;
    j["beta_halfspread"] = c.beta_halfspread;
    j["basis_std"] = c.basis_std;
    j["basis_persistence"] = c.basis_persistence;
    write_text(path, j.dump(2) + "\n");
}

CalibrationConstants load_calibration(const std::filesystem::path& path) {
    try {
        auto j = json::parse(read_text(path));
        CalibrationConstants c{j.at("sigma").get<double>(), j.at("beta_halfspread").get<double>(),
                               j.at("basis_std").get<double>(),
                               j.at("basis_persistence").get<double>()};
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw DataError(fmt::format("malformed calibration document: {}", e.what()));
    }
}

}  // namespace subslot
