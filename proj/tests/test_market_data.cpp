#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "subslot/market_data.hpp"
#include "subslot/price_engine.hpp"

using namespace subslot;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Independent reading of the four conditions in basis points of the reference.
bool oracle_is_arb(const SwapEvent& s, double ref) {
    const long double pre_gap = std::fabs(static_cast<long double>(s.pre_price) - ref) / ref;
    const long double post_gap = std::fabs(static_cast<long double>(s.post_price) - ref) / ref;
    if (s.index_in_block != 0) return false;
    if (!(pre_gap > s.pool_fee + 1e-12L)) return false;  // equal to the fee is not "exceeding"
    if (!(std::fabs(s.post_price - ref) < std::fabs(s.pre_price - ref))) return false;
    return post_gap >= s.pool_fee - 1e-12L;
}

SwapEvent swap(std::int64_t block, std::int64_t idx, double pre, double post, double fee = 0.003) {
    return {block, idx, pre, post, pre > post ? 1.0 : -1.0, pre > post ? -1.0 : 1.0, fee};
}

}  // namespace

TEST_SUITE("market_data") {
    TEST_CASE("classifier fixture labels match hand labels and the predicate oracle") {
        const std::filesystem::path data(SUBSLOT_TEST_DATA);
        const auto swaps = load_swaps(data / "classifier_swaps.csv");
        const auto ticks = load_ticks(data / "classifier_ticks.csv");
        REQUIRE(swaps.size() == 12);
        const auto result = classify_swaps(swaps, ticks, BlockClock{100, 0, 12'000});
        REQUIRE(result.rejected.empty());
        REQUIRE(result.labeled.size() == 12);

        std::map<std::pair<std::int64_t, std::int64_t>, std::string> expected;
        std::istringstream in(slurp(data / "classifier_expected.csv"));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::int64_t b = 0, i = 0;
            char c1 = 0, c2 = 0;
            std::istringstream ls(line);
            ls >> b >> c1 >> i >> c2;
            std::string label;
            ls >> label;
            expected[{b, i}] = label;
        }
        for (const auto& l : result.labeled) {
            CAPTURE(l.swap.block_number);
            CAPTURE(l.swap.index_in_block);
            CHECK(to_string(l.label) == expected.at({l.swap.block_number, l.swap.index_in_block}));
            CHECK((l.label == SwapLabel::arbitrage) == oracle_is_arb(l.swap, 3000.0));
            if (l.label == SwapLabel::arbitrage) CHECK(l.swap.index_in_block == 0);
        }
    }

    TEST_CASE("single-swap classifier examples") {
        CHECK(classify_swap(swap(1, 0, 3012, 3009), 3000) == SwapLabel::arbitrage);
        CHECK(classify_swap(swap(1, 1, 3012, 3009), 3000) == SwapLabel::noise);
        CHECK(classify_swap(swap(1, 0, 3003, 3001), 3000) == SwapLabel::noise);
    }

    TEST_CASE("classification is order independent") {
        const std::filesystem::path data(SUBSLOT_TEST_DATA);
        auto swaps = load_swaps(data / "classifier_swaps.csv");
        const auto ticks = load_ticks(data / "classifier_ticks.csv");
        const auto a = classify_swaps(swaps, ticks, BlockClock{100, 0, 12'000});
        std::reverse(swaps.begin(), swaps.end());
        const auto b = classify_swaps(swaps, ticks, BlockClock{100, 0, 12'000});
        for (std::size_t i = 0; i < a.labeled.size(); ++i) {
            CHECK(a.labeled[i].label == b.labeled[a.labeled.size() - 1 - i].label);
        }
    }

    TEST_CASE("swap without a prior CEX quote is rejected, not dropped") {
        const std::vector<SwapEvent> swaps{swap(99, 0, 3012, 3009), swap(100, 0, 3012, 3009)};
        const std::vector<TickQuote> ticks{{0, 2999, 3001}};
        const auto r = classify_swaps(swaps, ticks, BlockClock{100, 0, 12'000});
        REQUIRE(r.rejected.size() == 1);
        CHECK(r.rejected[0].swap.block_number == 99);
        CHECK(r.rejected[0].reason.find("block 99") != std::string::npos);
        CHECK(r.labeled.size() == 1);
    }

    TEST_CASE("noise count pmf includes zero-count blocks") {
        std::vector<LabeledSwap> l{
            {swap(1, 0, 3012, 3009), SwapLabel::arbitrage},
            {swap(2, 1, 3000, 3001), SwapLabel::noise},
            {swap(2, 2, 3001, 3000), SwapLabel::noise},
            {swap(3, 0, 3000, 3001), SwapLabel::noise},
            {swap(3, 1, 3001, 3002), SwapLabel::noise},
        };
        const auto d = estimate_noise_distribution(l);
        REQUIRE(d.count_pmf.size() == 2);
        CHECK(d.count_pmf.at(0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
        CHECK(d.count_pmf.at(2) == doctest::Approx(2.0 / 3).epsilon(1e-15));
        d.validate();
    }

    TEST_CASE("impact rounding and outlier exclusion") {
        std::vector<LabeledSwap> a{{swap(1, 0, 10000, 10004.4), SwapLabel::noise},
                                   {swap(1, 1, 10000, 9996.4), SwapLabel::noise}};
        const auto da = estimate_noise_distribution(a);
        CHECK(da.impact_pmf == std::map<int, double>{{-4, 0.5}, {4, 0.5}});

        std::vector<LabeledSwap> b{{swap(1, 0, 10000, 10010), SwapLabel::noise},
                                   {swap(1, 1, 10000, 10035), SwapLabel::noise}};
        const auto db = estimate_noise_distribution(b);
        CHECK(db.impact_pmf == std::map<int, double>{{10, 1.0}});
    }

    TEST_CASE("no noise trades yields the empty marker") {
        std::vector<LabeledSwap> l{{swap(1, 0, 3012, 3009), SwapLabel::arbitrage}};
        const auto d = estimate_noise_distribution(l);
        CHECK(d.empty());
        CHECK_NOTHROW(d.validate());
        CHECK_THROWS_AS(estimate_noise_distribution({}), DataError);
    }

    TEST_CASE("distribution document round-trips") {
        NoiseDistribution d;
        d.count_pmf = {{0, 0.25}, {1, 0.75}};
        d.impact_pmf = {{-3, 0.1}, {2, 0.9}};
        const auto back = distribution_from_json(distribution_to_json(d));
        CHECK(back.count_pmf == d.count_pmf);
        CHECK(back.impact_pmf == d.impact_pmf);
    }

    TEST_CASE("calibration on degenerate series") {
        std::vector<TickQuote> flat;
        for (int i = 0; i < 50; ++i) flat.push_back({i * 1000, 3000, 3000});
        auto c = calibrate(flat, {});
        CHECK(c.sigma == 0.0);
        CHECK(c.beta_halfspread == 0.0);

        std::vector<TickQuote> spread;
        for (int i = 0; i < 50; ++i) spread.push_back({i * 1000, 2997, 3003});
        c = calibrate(spread, {});
        CHECK(c.beta_halfspread == doctest::Approx(0.001).epsilon(1e-12));
    }

    TEST_CASE("calibration recovers generator sigma and beta") {
        const auto ticks = synth_cex(7, 100'000, 0.0002, 0.0004, 3000.0);
        const auto c = calibrate(ticks, {});
        CHECK(std::abs(c.sigma / 0.0002 - 1.0) < 0.05);
        CHECK(std::abs(c.beta_halfspread / 0.0004 - 1.0) < 0.05);
    }

    TEST_CASE("calibration basis moments against a direct computation") {
        // AR(1) basis sampled every 12 s, LOCF between samples.
        std::vector<TickQuote> ticks;
        std::vector<DexPrice> dex;
        CounterRng rng(5, Stream::synthetic_swaps);
        double eta = 0.0;
        std::vector<double> sampled;
        for (int n = 0; n < 2000; ++n) {
            eta = 0.6 * eta + rng.normal();
            sampled.push_back(eta);
            for (int j = 0; j < 12; ++j) ticks.push_back({(n * 12 + j) * 1000LL, 2999, 3001});
            dex.push_back({n * 12 * 1000LL, 3000 + eta});
        }
        const auto c = calibrate(ticks, dex);
        // Oracle: sample sd and lag-1 autocorrelation of the slot series.
        double mean = 0.0;
        for (double x : sampled) mean += x;
        mean /= sampled.size();
        double ss = 0.0, cross = 0.0;
        for (std::size_t i = 0; i < sampled.size(); ++i) {
            ss += (sampled[i] - mean) * (sampled[i] - mean);
            if (i + 1 < sampled.size()) cross += (sampled[i] - mean) * (sampled[i + 1] - mean);
        }
        CHECK(c.basis_std == doctest::Approx(std::sqrt(ss / (sampled.size() - 1))).epsilon(1e-9));
        CHECK(c.basis_persistence == doctest::Approx(cross / ss).epsilon(1e-9));
        CHECK(c.basis_persistence == doctest::Approx(0.6).epsilon(0.1));
    }

    TEST_CASE("calibration file round-trips exactly") {
        const CalibrationConstants c{1.234567890123e-4, 5.5e-6, 0.731, 0.42};
        const auto path = std::filesystem::temp_directory_path() / "subslot_calibration_test.json";
        save_calibration(c, path);
        const auto back = load_calibration(path);
        CHECK(back.sigma == c.sigma);
        CHECK(back.beta_halfspread == c.beta_halfspread);
        CHECK(back.basis_std == c.basis_std);
        CHECK(back.basis_persistence == c.basis_persistence);
    }

    TEST_CASE("tick CSV parsing") {
        CHECK(parse_ticks("timestamp_ms,bid,ask\n").empty());
        const auto t = parse_ticks("timestamp_ms,bid,ask\n1,2999.5,3000.5\n2,2999.25,3000.75\n3,3001,3002\n");
        REQUIRE(t.size() == 3);
        CHECK(t[1].timestamp_ms == 2);
        CHECK(t[1].bid == 2999.25);
        CHECK(t[1].ask == 3000.75);
        try {
            parse_ticks("timestamp_ms,bid,ask\n1,3000,3001\n2,3000,2999\n", "q.csv");
            FAIL("expected rejection");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("q.csv:3: field 'ask'") != std::string::npos);
        }
        CHECK_THROWS_AS(parse_ticks("timestamp_ms,bid,ask\n2,1,2\n1,1,2\n"), DataError);
        CHECK_THROWS_AS(parse_ticks("timestamp_ms,bid,ask\n1,abc,2\n"), DataError);
        CHECK_THROWS_AS(parse_ticks("ts,bid,ask\n"), DataError);
    }

    TEST_CASE("tick CSV write and read round-trip") {
        const std::vector<TickQuote> t{{0, 2999.123456789, 3001.987654321}, {1000, 1e-3, 2e-3}, {2000, 5, 5}};
        const auto path = std::filesystem::temp_directory_path() / "subslot_ticks_test.csv";
        write_ticks(t, path);
        const auto back = load_ticks(path);
        REQUIRE(back.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(back[i].timestamp_ms == t[i].timestamp_ms);
            CHECK(back[i].bid == t[i].bid);
            CHECK(back[i].ask == t[i].ask);
        }
    }

    TEST_CASE("swap CSV rejects malformed rows") {
        const std::string h = "block_number,index_in_block,pre_price,post_price,base_delta,quote_delta,pool_fee\n";
        CHECK_THROWS_AS(parse_swaps(h + "1,0,3000,3001,1,1,0.003\n"), DataError);
        CHECK_THROWS_AS(parse_swaps(h + "1,0,3000,3001,1,-1\n"), DataError);
        CHECK_THROWS_AS(parse_swaps(h + "2,0,3000,3001,1,-1,0.003\n1,0,3000,3001,1,-1,0.003\n"), DataError);
        CHECK(parse_swaps(h).empty());
    }

    TEST_CASE("LOCF alignment") {
        const std::vector<TickQuote> t{{0, 1, 2}, {2500, 3, 4}};
        const auto g = align_ticks(t, 0, 4);
        REQUIRE(g.size() == 4);
        CHECK(g[2].bid == 1);
        CHECK(g[3].bid == 3);
        CHECK_THROWS(align_ticks(t, -1000, 2));
    }
}
