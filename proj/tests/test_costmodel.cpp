#include <doctest.h>

#include <sstream>
#include <stdexcept>

#include "eeml/checks.hpp"
#include "eeml/costmodel.hpp"

using namespace eeml;

TEST_CASE("formula edge values: T=1 V=0 h=1 d=1") {
    const CostConfig c{1, 0, 1, 1};
    CHECK(flops_baseline_total(c) == 28);
    CHECK(flops_ee_total(c) == 26);
}

TEST_CASE("frozen big-integer values at T=256 V=4900 h=4096") {
    // Reference values computed by an independent big-integer evaluation of
    // the two closed forms.
    const CostConfig d1{256, 4900, 4096, 1};
    CHECK(flops_baseline_total(d1) == 2511637577728ull);
    CHECK(flops_ee_total(d1) == 1760282279936ull);

    const CostConfig d32{256, 4900, 4096, 32};
    CHECK(flops_baseline_total(d32) == 80372402487296ull);
    CHECK(flops_ee_total(d32) == 56329032957952ull);

    const double ratio = flops_ratio(d32);
    CHECK(ratio == doctest::Approx(0.7008504314).epsilon(1e-9));
    CHECK(ratio > 0.6959);
    CHECK(ratio < 0.7059);
}

TEST_CASE("doubling d exactly doubles both totals") {
    const CostConfig c{17, 33, 8, 3};
    CostConfig twice = c;
    twice.depth = 6;
    CHECK(flops_baseline_total(twice) == 2 * flops_baseline_total(c));
    CHECK(flops_ee_total(twice) == 2 * flops_ee_total(c));
}

TEST_CASE("component sums equal totals exactly on a 50+ point grid") {
    int points = 0;
    for (const std::uint64_t t : {1ull, 7ull, 64ull, 256ull, 1000ull})
        for (const std::uint64_t v : {0ull, 1ull, 576ull, 2890ull, 4900ull})
            for (const std::uint64_t h : {1ull, 128ull})
                for (const std::uint64_t d : {1ull, 3ull}) {
                    const CostConfig c{t, v, h, d};
                    CHECK(flops_baseline_components(c).total() == flops_baseline_total(c));
                    CHECK(flops_ee_components(c).total() == flops_ee_total(c));
                    ++points;
                }
    CHECK(points == 100);
}

TEST_CASE("ratio is exactly d-invariant") {
    const CostConfig base{256, 4900, 4096, 1};
    for (const std::uint64_t d : {2ull, 7ull, 32ull, 128ull}) {
        CostConfig c = base;
        c.depth = d;
        CHECK(flops_ratio(c) == flops_ratio(base));
    }
}

TEST_CASE("V=0 ratio matches the hand-reduced fraction") {
    const CostConfig c{256, 0, 4096, 1};
    // (22*256*4096 + 4*256^2) / (24*256*4096 + 4*256^2)
    const double want = 23330816.0 / 25427968.0;
    CHECK(flops_ratio(c) == doctest::Approx(want).epsilon(1e-12));
    CHECK(flops_ratio(c) == doctest::Approx(0.9175257732).epsilon(1e-9));
}

TEST_CASE("ratio strictly decreases as V grows") {
    double prev = 2.0;
    for (const std::uint64_t v : {0ull, 100ull, 576ull, 2890ull, 4900ull, 10000ull}) {
        const CostConfig c{256, v, 4096, 2};
        const double r = flops_ratio(c);
        CHECK(r < prev);
        prev = r;
    }
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(flops_baseline_total(CostConfig{0, 1, 4, 1}), std::invalid_argument);
    CHECK_THROWS_AS(flops_ee_total(CostConfig{1, 1, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(flops_ratio(CostConfig{1, 1, 4, 0}), std::invalid_argument);
}

TEST_CASE("overflow in the wide formulas is reported, not wrapped") {
    // passes validation (every dim <= 2^26) but the exact value exceeds 2^64
    const CostConfig huge{1ull << 26, 0, 1ull << 26, 1ull << 26};
    CHECK_THROWS_AS(flops_baseline_total(huge), std::overflow_error);
    // and dims beyond the cap are rejected up front
    CHECK_THROWS_AS(flops_baseline_total(CostConfig{1ull << 40, 0, 4, 1}),
                    std::invalid_argument);
}

TEST_CASE("instrumented baseline equals the formula exactly on random toy configs") {
    Prng rng(71);
    for (int t = 0; t < 10; ++t) {
        ModelConfig cfg;
        cfg.heads = 1 + rng.next_u64() % 2;
        cfg.hidden_dim = cfg.heads * (2 + rng.next_u64() % 8);
        cfg.depth = 1 + rng.next_u64() % 3;
        cfg.vocab_size = 11;
        cfg.feature_dim = 5;
        const Model model = build_model(cfg, 100 + t);
        const std::size_t k = rng.next_u64() % 17;
        const std::size_t n = 1 + rng.next_u64() % 16;

        const CostConfig cc{n, k, cfg.hidden_dim, cfg.depth};
        const InstrumentedCounts counts = instrumented_flops(model, k, n);
        CHECK(counts.baseline == flops_baseline_total(cc));
    }
}

TEST_CASE("instrumented ee delta vs the formula is exactly 2(T+V)h^2 per layer") {
    Prng rng(73);
    for (int t = 0; t < 10; ++t) {
        ModelConfig cfg;
        cfg.heads = 1 + rng.next_u64() % 2;
        cfg.hidden_dim = cfg.heads * (2 + rng.next_u64() % 6);
        cfg.depth = 1 + rng.next_u64() % 3;
        cfg.vocab_size = 11;
        cfg.feature_dim = 5;
        const Model model = build_model(cfg, 200 + t);
        const std::size_t k = rng.next_u64() % 12;
        const std::size_t n = 1 + rng.next_u64() % 12;

        const CostConfig cc{n, k, cfg.hidden_dim, cfg.depth};
        const InstrumentedCounts counts = instrumented_flops(model, k, n);
        const std::uint64_t delta =
            2ull * (n + k) * cfg.hidden_dim * cfg.hidden_dim * cfg.depth;
        CHECK(counts.composite == flops_ee_total(cc) + delta);
    }
}

TEST_CASE("k=0: instrumented modes coincide; the formula gap is the documented 2Th^2 d") {
    // With no visual tokens the two stacks run the same computation, so the
    // instrumented counts must be identical. The closed-form gap at V=0
    // (22T vs 24T per h^2) is exactly the measured formula delta.
    ModelConfig cfg;
    cfg.heads = 2;
    cfg.hidden_dim = 12;
    cfg.depth = 2;
    cfg.vocab_size = 11;
    cfg.feature_dim = 5;
    const Model model = build_model(cfg, 300);
    const std::size_t n = 9;
    const InstrumentedCounts counts = instrumented_flops(model, 0, n);
    CHECK(counts.composite == counts.baseline);

    const CostConfig cc{n, 0, cfg.hidden_dim, cfg.depth};
    CHECK(counts.composite - flops_ee_total(cc) ==
          2ull * n * cfg.hidden_dim * cfg.hidden_dim * cfg.depth);
}

TEST_CASE("instrumented ee grows exactly linearly in k at fixed n") {
    ModelConfig cfg;
    cfg.heads = 2;
    cfg.hidden_dim = 8;
    cfg.depth = 2;
    cfg.vocab_size = 11;
    cfg.feature_dim = 5;
    const Model model = build_model(cfg, 400);
    const std::size_t n = 6;

    const std::size_t ks[] = {4, 8, 16, 32};
    double xs[4], ys[4];
    for (int i = 0; i < 4; ++i) {
        xs[i] = static_cast<double>(ks[i]);
        ys[i] = static_cast<double>(instrumented_flops(model, ks[i], n).composite);
    }
    // least-squares line; residuals must vanish relative to the scale
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < 4; ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / 4;
    for (int i = 0; i < 4; ++i) {
        const double fit = slope * xs[i] + intercept;
        CHECK(std::abs(fit - ys[i]) < 1e-6 * ys[i]);
    }
}

TEST_CASE("build_instrumented_report fills the delta and matches invariants") {
    ModelConfig cfg;
    cfg.heads = 2;
    cfg.hidden_dim = 8;
    cfg.depth = 2;
    cfg.vocab_size = 11;
    cfg.feature_dim = 5;
    const Model model = build_model(cfg, 500);
    const CostConfig cc{5, 7, 8, 2};
    const FlopsReport report = build_instrumented_report(cc, model);
    CHECK(report.has_instrumented);
    CHECK(report.instrumented_baseline == report.baseline_total);
    CHECK(report.instrumented_delta_vs_formula ==
          static_cast<std::int64_t>(report.instrumented_ee) -
              static_cast<std::int64_t>(report.ee_total));
    CHECK(report.instrumented_delta_vs_formula == 2ll * (5 + 7) * 8 * 8 * 2);

    ModelConfig other = cfg;
    other.hidden_dim = 16;
    other.heads = 2;
    const Model mismatched = build_model(other, 501);
    CHECK_THROWS_AS(build_instrumented_report(cc, mismatched), std::invalid_argument);
}

TEST_CASE("sweep CSV: header, one row per config, six-decimal ratio") {
    const std::vector<CostConfig> grid = {{256, 576, 4096, 1}};
    const std::string csv = sweep_to_csv(grid);
    CHECK(csv == "T,V,h,d,baseline_flops,ee_flops,ratio\n"
                 "256,576,4096,1,346348847104,291252469760,0.840922\n");
}

TEST_CASE("sweep over the cited visual token counts has strictly decreasing ratio") {
    const std::vector<CostConfig> grid = {
        {256, 576, 4096, 1}, {256, 2890, 4096, 1}, {256, 4900, 4096, 1}};
    const std::string csv = sweep_to_csv(grid);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    double prev = 2.0;
    int rows = 0;
    while (std::getline(in, line)) {
        const double ratio = std::stod(line.substr(line.rfind(',') + 1));
        CHECK(ratio < prev);
        prev = ratio;
        ++rows;
    }
    CHECK(rows == 3);
}

TEST_CASE("sweep rejects an empty grid and names a malformed config") {
    CHECK_THROWS_AS(sweep_to_csv({}), std::invalid_argument);
    try {
        sweep_to_csv({{256, 10, 16, 1}, {0, 10, 16, 1}});
        CHECK(false);
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("config #1") != std::string::npos);
        CHECK(msg.find("T=0") != std::string::npos);
    }
}
