#include "subslot/amm_pool.hpp"

#include <cmath>

#include <fmt/format.h>

namespace subslot {

void PoolState::validate() const {
    if (!(base_reserve > 0.0) || !(quote_reserve > 0.0)) {
        throw PoolError(fmt::format("reserves must be positive (x={}, y={})", base_reserve, quote_reserve));
    }
    if (!(fee >= 0.0 && fee < 1.0)) throw PoolError(fmt::format("fee {} outside [0, 1)", fee));
}

PoolState PoolState::repriced(double price) const {
    if (!(price > 0.0)) throw PoolError(fmt::format("cannot reprice pool to {}", price));
    const double k = invariant();
    const double x = std::sqrt(k / price);
    double y = price * x;
    // Rounding must never shrink the invariant.
    while (x * y < k) y = std::nextafter(y, HUGE_VAL);
    return {x, y, fee};
}

PoolState PoolState::with_liquidity(double base_reserve, double price, double fee) {
    PoolState p{base_reserve, base_reserve * price, fee};
    p.validate();
    return p;
}

double spot_price(const PoolState& pool) noexcept { return pool.spot_price(); }

SwapResult execute_swap(const PoolState& pool, SwapSide side, double amount_in) {
    if (!(amount_in > 0.0)) throw PoolError(fmt::format("amount_in must be positive, got {}", amount_in));
    const double gamma = 1.0 - pool.fee;
    const double x = pool.base_reserve;
    const double y = pool.quote_reserve;
    SwapResult r;
    r.side = side;
    r.amount_in = amount_in;
    if (side == SwapSide::buy_base) {
        r.amount_out = x * gamma * amount_in / (y + gamma * amount_in);
        if (!(r.amount_out < x)) throw PoolError("swap would drain the base reserve");
        r.pool = {x - r.amount_out, y + amount_in, pool.fee};
    } else {
        r.amount_out = y * gamma * amount_in / (x + gamma * amount_in);
        if (!(r.amount_out < y)) throw PoolError("swap would drain the quote reserve");
        r.pool = {x + amount_in, y - r.amount_out, pool.fee};
    }
    r.exec_price = r.quote_amount() / r.base_amount();
    return r;
}

double amount_in_for_output(const PoolState& pool, SwapSide side, double amount_out) {
    const double gamma = 1.0 - pool.fee;
    const double x = pool.base_reserve;
    const double y = pool.quote_reserve;
    const double out_reserve = side == SwapSide::buy_base ? x : y;
    const double in_reserve = side == SwapSide::buy_base ? y : x;
    if (!(amount_out > 0.0) || !(amount_out < out_reserve)) {
        throw PoolError(fmt::format("cannot receive {} from reserve {}", amount_out, out_reserve));
    }
    return in_reserve * amount_out / (gamma * (out_reserve - amount_out));
}

std::optional<ArbSizing> optimal_arb_size(const PoolState& pool, double cex_bid, double cex_ask) {
    const double f = pool.fee;
    const double gamma = 1.0 - f;
    const double x = pool.base_reserve;
    const double y = pool.quote_reserve;
    const double p = pool.spot_price();

    // Post-trade spot price as a function of input a is quadratic in a:
    //   buy:  (y + a)(y + g a) = t x y
    //   sell: (x + b)(x + g b) = x y / t
    // Positive root written in the cancellation-free form 2c / (B + sqrt(D)).
    auto root = [gamma](double r, double c) {
        const double b = r * (1.0 + gamma);
        return 2.0 * c / (b + std::sqrt(b * b + 4.0 * gamma * c));
    };

    const double buy_target = cex_bid * (1.0 - f);
    if (p < buy_target) {
        return ArbSizing{SwapSide::buy_base, root(y, buy_target * x * y - y * y), buy_target};
    }
    const double sell_target = cex_ask * (1.0 + f);
    if (p > sell_target) {
        return ArbSizing{SwapSide::sell_base, root(x, x * y / sell_target - x * x), sell_target};
    }
    return std::nullopt;
}

}  // namespace subslot
