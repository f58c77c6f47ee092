#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "subslot/market_data.hpp"
#include "subslot/rng.hpp"

namespace subslot {

inline constexpr int kSubslotsPerBlock = 12;

// Per-interval OLS fit of DEX simple returns on CEX simple returns.
struct ReversionInterval {
    double beta0 = 0.0;
    double beta1 = 0.0;
    double residual_variance = 0.0;
    std::size_t points = 0;
    bool carried_forward = false;  // degenerate interval; coefficients inherited
};

struct ReversionModel {
    std::int64_t window_seconds = 300;
    std::vector<ReversionInterval> intervals;

    // Interval holding the return that ends at `second` (1-based):
    // F_k = (k*W, (k+1)*W].
    const ReversionInterval& interval_for_second(std::int64_t second) const;
};

std::vector<double> simple_returns(std::span<const double> prices);

/// Return i (0-based) is the move ending at second i+1.
ReversionModel fit_reversion(std::span<const double> cex_returns, std::span<const double> dex_returns,
                             std::int64_t window_seconds = 300);

struct RevertResult {
    double price = 0.0;
    bool clamped = false;
};

RevertResult revert_step(const ReversionInterval& coeffs, double last_dex, double cex_return,
                         double floor_fraction = 1e-9);

struct NoiseTrade {
    int subslot = 0;  // 0..subslots-1 within the 12-second block
    int impact_bp = 0;
};

// One block's worth of noise trades, ordered by subslot (ties keep draw
// order). Count, placement and impact each come from their own substream.
std::vector<NoiseTrade> sample_noise_trades(const NoiseDistribution& dist, int subslots,
                                            std::uint64_t seed, std::int64_t block);

double apply_impact(double price, int impact_bp) noexcept;

struct EngineConfig {
    bool reversion_enabled = false;
    bool noise_enabled = false;
    std::int64_t window_seconds = 300;
    std::uint64_t seed = 0;
};

std::string configuration_name(bool reversion, bool noise);

enum Provenance : unsigned {
    kCarry = 0,
    kArb = 1u << 0,
    kReversion = 1u << 1,
    kNoise = 1u << 2,
};

std::string provenance_label(unsigned tags);

struct StepResult {
    double price = 0.0;
    unsigned provenance = kCarry;
    bool clamped = false;
};

/// Background DEX dynamics between arbitrage events on a 1-second grid:
/// regression-based reversion followed by sampled noise trades. Both regimes
/// consume the same schedule, so paired runs see identical shocks.
class PriceEngine {
public:
    PriceEngine(EngineConfig config, std::vector<double> cex_mid, ReversionModel reversion,
                NoiseDistribution noise);

    // Applies second `second` (>= 1) to `price`.
    StepResult step(double price, std::int64_t second) const;

    std::int64_t horizon_seconds() const noexcept {
        return static_cast<std::int64_t>(cex_mid_.size()) - 1;
    }
    const EngineConfig& config() const noexcept { return config_; }
    const ReversionModel& reversion() const noexcept { return reversion_; }
    std::span<const int> noise_at(std::int64_t second) const;
    double cex_return(std::int64_t second) const;

private:
    EngineConfig config_;
    std::vector<double> cex_mid_;
    ReversionModel reversion_;
    NoiseDistribution noise_;
    std::vector<std::size_t> noise_offsets_;  // CSR layout over seconds
    std::vector<int> noise_impacts_;
};

struct ArbFill {
    int subslot = 0;          // execution point within the slot
    double post_price = 0.0;  // pool price right after the fill
};

struct SubslotPricePath {
    std::int64_t slot = 0;
    std::vector<double> prices;         // p(t_{n,m}), m = 0..M-1, observed before any fill at m
    std::vector<unsigned> provenance;
    double next_boundary_price = 0.0;   // p(t_{n+1,0}) before the next boundary's fill
};

SubslotPricePath build_subslot_path(double boundary_price, std::span<const ArbFill> fills,
                                    const PriceEngine& engine, std::int64_t slot,
                                    int subslots = kSubslotsPerBlock);

void write_path_csv(std::span<const SubslotPricePath> paths, const std::string& path);

// Synthetic 1-second CEX quotes: Gaussian log-walk mid, symmetric half-spread.
// Returns n_seconds + 1 quotes (t = 0..n_seconds).
std::vector<TickQuote> synth_cex(std::uint64_t seed, std::int64_t n_seconds, double sigma,
                                 double beta_halfspread, double p0, std::int64_t start_ms = 0);

struct SyntheticDexParams {
    double follow = 0.3;       // share of each CEX log-return passed through
    double pull = 0.05;        // per-second pull of the log-basis toward zero
    double noise_std = 2e-5;   // idiosyncratic log-return noise
};

// Reference DEX series that partially follows the CEX mid; used to fit the
// reversion model and the basis process when no recorded DEX data is given.
std::vector<DexPrice> synth_dex_reference(std::uint64_t seed, std::span<const TickQuote> cex,
                                          const SyntheticDexParams& params);

}  // namespace subslot
