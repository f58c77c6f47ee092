#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>
#include <system_error>
#include <utility>

#include <fmt/format.h>
#include <fmt/os.h>

#include "subslot/market_data.hpp"

namespace subslot {
namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// Iterates data rows, checking the header and column count. `fn` receives
// (line number, fields).
template <class Fn>
void for_each_row(std::string_view text, std::string_view header, const std::string& source,
                  Fn&& fn) {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    const std::size_t columns = split(header, ',').size();
    std::size_t line_no = 0;
    bool seen_header = false;
    while (!text.empty()) {
        auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (!seen_header) {
            if (line != header) {
                throw DataError(fmt::format("{}:{}: expected header '{}', got '{}'", source,
                                            line_no, header, line));
            }
            seen_header = true;
            continue;
        }
        auto fields = split(line, ',');
        if (fields.size() != columns) {
            throw DataError(fmt::format("{}:{}: expected {} fields, got {}", source, line_no,
                                        columns, fields.size()));
        }
        for (auto& f : fields) f = trim(f);
        fn(line_no, fields);
    }
    if (!seen_header) throw DataError(fmt::format("{}: missing header '{}'", source, header));
}

class FieldReader {
public:
    FieldReader(const std::string& source, std::size_t line, std::string_view header,
                const std::vector<std::string_view>& fields)
        : source_(source), line_(line), names_(split(header, ',')), fields_(fields) {}

    double number(std::size_t i) const {
        double v = 0.0;
        auto f = fields_[i];
        auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc{} || ptr != f.data() + f.size() || f.empty()) {
            fail(i, fmt::format("not a number: '{}'", f));
        }
        return v;
    }

    std::int64_t integer(std::size_t i) const {
        std::int64_t v = 0;
        auto f = fields_[i];
        auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc{} || ptr != f.data() + f.size() || f.empty()) {
            fail(i, fmt::format("not an integer: '{}'", f));
        }
        return v;
    }

    [[noreturn]] void fail(std::size_t i, const std::string& what) const {
        throw DataError(fmt::format("{}:{}: field '{}': {}", source_, line_, names_[i], what));
    }

private:
    const std::string& source_;
    std::size_t line_;
    std::vector<std::string_view> names_;
    const std::vector<std::string_view>& fields_;
};

constexpr std::string_view kTickHeader = "timestamp_ms,bid,ask";
constexpr std::string_view kSwapHeader =
    "block_number,index_in_block,pre_price,post_price,base_delta,quote_delta,pool_fee";
constexpr std::string_view kDexHeader = "timestamp_ms,price";

}  // namespace

std::vector<TickQuote> parse_ticks(std::string_view text, const std::string& source) {
    std::vector<TickQuote> out;
    for_each_row(text, kTickHeader, source, [&](std::size_t line, const auto& fields) {
        FieldReader r(source, line, kTickHeader, fields);
        TickQuote q{r.integer(0), r.number(1), r.number(2)};
        if (!(q.bid > 0.0)) r.fail(1, "bid must be positive");
        if (!(q.ask >= q.bid)) r.fail(2, fmt::format("ask {} below bid {}", q.ask, q.bid));
        if (!out.empty() && q.timestamp_ms <= out.back().timestamp_ms) {
            r.fail(0, "timestamps must be strictly increasing");
        }
        out.push_back(q);
    });
    return out;
}

std::vector<SwapEvent> parse_swaps(std::string_view text, const std::string& source) {
    std::vector<SwapEvent> out;
    for_each_row(text, kSwapHeader, source, [&](std::size_t line, const auto& fields) {
        FieldReader r(source, line, kSwapHeader, fields);
        SwapEvent s{r.integer(0), r.integer(1), r.number(2), r.number(3),
                    r.number(4), r.number(5), r.number(6)};
        if (s.index_in_block < 0) r.fail(1, "must be non-negative");
        if (!(s.pre_price > 0.0)) r.fail(2, "must be positive");
        if (!(s.post_price > 0.0)) r.fail(3, "must be positive");
        if (!(s.base_delta * s.quote_delta < 0.0)) {
            r.fail(5, "base_delta and quote_delta must have opposite signs");
        }
        if (!(s.pool_fee >= 0.0 && s.pool_fee < 1.0)) r.fail(6, "must lie in [0, 1)");
        if (!out.empty()) {
            const auto& p = out.back();
            if (std::pair(s.block_number, s.index_in_block) <=
                std::pair(p.block_number, p.index_in_block)) {
                r.fail(0, "swaps must be ordered by (block_number, index_in_block)");
            }
        }
        out.push_back(s);
    });
    return out;
}

std::vector<DexPrice> parse_dex_prices(std::string_view text, const std::string& source) {
    std::vector<DexPrice> out;
    for_each_row(text, kDexHeader, source, [&](std::size_t line, const auto& fields) {
        FieldReader r(source, line, kDexHeader, fields);
        DexPrice p{r.integer(0), r.number(1)};
        if (!(p.price > 0.0)) r.fail(1, "must be positive");
        if (!out.empty() && p.timestamp_ms <= out.back().timestamp_ms) {
            r.fail(0, "timestamps must be strictly increasing");
        }
        out.push_back(p);
    });
    return out;
}

std::vector<TickQuote> load_ticks(const std::filesystem::path& path) {
    return parse_ticks(read_file(path), path.string());
}

std::vector<SwapEvent> load_swaps(const std::filesystem::path& path) {
    return parse_swaps(read_file(path), path.string());
}

std::vector<DexPrice> load_dex_prices(const std::filesystem::path& path) {
    return parse_dex_prices(read_file(path), path.string());
}

void write_ticks(std::span<const TickQuote> ticks, const std::filesystem::path& path) {
    auto out = fmt::output_file(path.string());
    out.print("{}\n", kTickHeader);
    for (const auto& q : ticks) out.print("{},{},{}\n", q.timestamp_ms, q.bid, q.ask);
}

void write_swaps(std::span<const SwapEvent> swaps, const std::filesystem::path& path) {
    auto out = fmt::output_file(path.string());
    out.print("{}\n", kSwapHeader);
    for (const auto& s : swaps) {
        out.print("{},{},{},{},{},{},{}\n", s.block_number, s.index_in_block, s.pre_price,
                  s.post_price, s.base_delta, s.quote_delta, s.pool_fee);
    }
}

void write_dex_prices(std::span<const DexPrice> prices, const std::filesystem::path& path) {
    auto out = fmt::output_file(path.string());
    out.print("{}\n", kDexHeader);
    for (const auto& p : prices) out.print("{},{}\n", p.timestamp_ms, p.price);
}

void write_labeled_swaps(const Classification& result, const std::filesystem::path& path) {
    auto out = fmt::output_file(path.string());
    out.print("{},label\n", kSwapHeader);
    for (const auto& [s, label] : result.labeled) {
        out.print("{},{},{},{},{},{},{},{}\n", s.block_number, s.index_in_block, s.pre_price,
                  s.post_price, s.base_delta, s.quote_delta, s.pool_fee, to_string(label));
    }
    for (const auto& [s, reason] : result.rejected) {
        out.print("{},{},{},{},{},{},{},rejected: {}\n", s.block_number, s.index_in_block,
                  s.pre_price, s.post_price, s.base_delta, s.quote_delta, s.pool_fee, reason);
    }
}

}  // namespace subslot
