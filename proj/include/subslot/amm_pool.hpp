#pragma once

#include <optional>
#include <stdexcept>

namespace subslot {

class PoolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Constant-product pool. Fees are charged on the input and stay in the
/// reserves, so the invariant x*y only ever grows.
struct PoolState {
    double base_reserve = 0.0;   // x
    double quote_reserve = 0.0;  // y
    double fee = 0.0;            // fraction of input

    double spot_price() const noexcept { return quote_reserve / base_reserve; }
    double invariant() const noexcept { return base_reserve * quote_reserve; }
    void validate() const;

    // Same invariant, reserves moved so that the spot price equals `price`.
    PoolState repriced(double price) const;

    static PoolState with_liquidity(double base_reserve, double price, double fee);
};

enum class SwapSide {
    buy_base,   // quote in, base out
    sell_base,  // base in, quote out
};

struct SwapResult {
    SwapSide side = SwapSide::buy_base;
    double amount_in = 0.0;
    double amount_out = 0.0;
    PoolState pool;
    double exec_price = 0.0;  // quote per base

    double base_amount() const noexcept { return side == SwapSide::buy_base ? amount_out : amount_in; }
    double quote_amount() const noexcept { return side == SwapSide::buy_base ? amount_in : amount_out; }
};

double spot_price(const PoolState& pool) noexcept;

SwapResult execute_swap(const PoolState& pool, SwapSide side, double amount_in);

// Input needed to receive exactly `amount_out` of the output asset.
double amount_in_for_output(const PoolState& pool, SwapSide side, double amount_out);

struct ArbSizing {
    SwapSide side = SwapSide::buy_base;
    double amount_in = 0.0;
    double target_price = 0.0;
};

/// Trade that moves the pool to one fee away from the CEX quote:
/// bid*(1-f) when the pool is cheap, ask*(1+f) when it is rich. No value
/// when the pool already sits inside that band (boundary included).
std::optional<ArbSizing> optimal_arb_size(const PoolState& pool, double cex_bid, double cex_ask);

}  // namespace subslot
