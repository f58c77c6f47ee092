#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace subslot {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TickQuote {
    std::int64_t timestamp_ms = 0;
    double bid = 0.0;
    double ask = 0.0;

    double mid() const noexcept { return 0.5 * (bid + ask); }
};

struct SwapEvent {
    std::int64_t block_number = 0;
    std::int64_t index_in_block = 0;
    double pre_price = 0.0;
    double post_price = 0.0;
    double base_delta = 0.0;
    double quote_delta = 0.0;
    double pool_fee = 0.0;
};

// Reference DEX price observation (e.g. pool price sampled per block).
struct DexPrice {
    std::int64_t timestamp_ms = 0;
    double price = 0.0;
};

enum class SwapLabel { arbitrage, noise };

const char* to_string(SwapLabel label) noexcept;

struct LabeledSwap {
    SwapEvent swap;
    SwapLabel label = SwapLabel::noise;
};

struct RejectedSwap {
    SwapEvent swap;
    std::string reason;
};

struct Classification {
    std::vector<LabeledSwap> labeled;
    std::vector<RejectedSwap> rejected;
};

// Maps block numbers onto CEX time. Swap files carry no timestamps, so the
// caller pins one block to one wall-clock instant and blocks advance at a
// fixed cadence from there.
struct BlockClock {
    std::int64_t reference_block = 0;
    std::int64_t reference_ms = 0;
    std::int64_t block_ms = 12'000;

    std::int64_t timestamp_of(std::int64_t block) const noexcept {
        return reference_ms + (block - reference_block) * block_ms;
    }
};

// Relative distance |dex - cex| / cex.
double discrepancy(double dex_price, double cex_reference) noexcept;

// The four-condition arbitrage test against a CEX reference price.
SwapLabel classify_swap(const SwapEvent& swap, double cex_reference) noexcept;

// Labels every swap; swaps whose block has no CEX quote at or before its
// timestamp are returned in `rejected` with a diagnostic.
Classification classify_swaps(std::span<const SwapEvent> swaps, std::span<const TickQuote> cex,
                              const BlockClock& clock);

inline constexpr int kMaxImpactBp = 30;

/// Empirical noise-trade model: how many noise trades land per 12-second
/// block, and the signed price impact of each in whole basis points.
/// An empty `impact_pmf` is the "no noise" marker.
struct NoiseDistribution {
    std::map<int, double> count_pmf;
    std::map<int, double> impact_pmf;

    bool empty() const noexcept { return impact_pmf.empty(); }
    void validate() const;
};

int round_impact_bp(double pre_price, double post_price) noexcept;

NoiseDistribution estimate_noise_distribution(std::span<const LabeledSwap> labeled);

void save_distribution(const NoiseDistribution& dist, const std::filesystem::path& path);
NoiseDistribution load_distribution(const std::filesystem::path& path);
std::string distribution_to_json(const NoiseDistribution& dist);
NoiseDistribution distribution_from_json(const std::string& text);

struct CalibrationConstants {
    double sigma = 0.0;              // per-second log-return volatility of the CEX mid
    double beta_halfspread = 0.0;    // fractional half-spread
    double basis_std = 0.0;          // stationary std of DEX - CEX mid, price units
    double basis_persistence = 0.0;  // per-slot AR(1) coefficient of the basis

    void validate() const;
};

// Last-observation-carried-forward resampling onto a regular grid starting
// at `start_ms`. Grid points before the first observation are an error.
std::vector<TickQuote> align_ticks(std::span<const TickQuote> ticks, std::int64_t start_ms,
                                   std::size_t count, std::int64_t step_ms = 1000);
std::vector<double> align_prices(std::span<const DexPrice> prices, std::int64_t start_ms,
                                 std::size_t count, std::int64_t step_ms = 1000);

CalibrationConstants calibrate(std::span<const TickQuote> cex, std::span<const DexPrice> dex,
                               std::int64_t slot_seconds = 12);

void save_calibration(const CalibrationConstants& c, const std::filesystem::path& path);
CalibrationConstants load_calibration(const std::filesystem::path& path);

// CSV ingestion. Errors name the offending line and field.
std::vector<TickQuote> load_ticks(const std::filesystem::path& path);
std::vector<SwapEvent> load_swaps(const std::filesystem::path& path);
std::vector<DexPrice> load_dex_prices(const std::filesystem::path& path);

std::vector<TickQuote> parse_ticks(std::string_view text, const std::string& source = "<memory>");
std::vector<SwapEvent> parse_swaps(std::string_view text, const std::string& source = "<memory>");
std::vector<DexPrice> parse_dex_prices(std::string_view text,
                                       const std::string& source = "<memory>");

void write_ticks(std::span<const TickQuote> ticks, const std::filesystem::path& path);
void write_swaps(std::span<const SwapEvent> swaps, const std::filesystem::path& path);
void write_dex_prices(std::span<const DexPrice> prices, const std::filesystem::path& path);
void write_labeled_swaps(const Classification& result, const std::filesystem::path& path);

}  // namespace subslot
