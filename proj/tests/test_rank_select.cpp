#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "lrd/arch.hpp"
#include "lrd/checkpoint.hpp"
#include "lrd/error.hpp"
#include "lrd/linalg.hpp"
#include "lrd/pipeline.hpp"
#include "lrd/rank_select.hpp"
#include "oracles.hpp"

using namespace lrd;

namespace {

// Equal-rank Tucker-2 search: the r whose parameter count lands closest to the target.
std::size_t exhaustive_square_rank(std::size_t c, std::size_t k, double ratio) {
    const double target = static_cast<double>(c * c * k * k) / ratio;
    std::size_t best = 1;
    double best_gap = 1e300;
    for (std::size_t r = 1; r <= c; ++r) {
        const double gap = std::abs(static_cast<double>(tucker2_params(c, c, k * k, r, r)) - target);
        if (gap < best_gap) best_gap = gap, best = r;
    }
    return best;
}

std::size_t quantize_oracle(std::size_t r, std::size_t q, std::size_t r_max) {
    std::size_t best = 0;
    for (std::size_t m = 0; m <= r + q; m += q) {
        const auto gap = [&](std::size_t v) { return v > r ? v - r : r - v; };
        if (gap(m) <= gap(best)) best = m;  // later (larger) multiple wins ties
    }
    const std::size_t lo = std::min(q, r_max);
    return std::max(lo, std::min(best, r_max));
}

Tensor planted_rank3(std::mt19937_64& rng, double noise) {
    auto u = oracle::random_orthonormal(64, 3, rng);
    auto v = oracle::random_orthonormal(64, 3, rng);
    const double sv[3] = {50, 40, 30};
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 3; ++j) u(i, j) *= sv[j];
    auto w = oracle::naive_gemm(u, oracle::naive_transpose(v));
    std::normal_distribution<double> n(0.0, noise);
    for (double& x : w.data()) x += n(rng);
    return w;
}

}  // namespace

TEST_CASE("PR dense ranks") {
    CHECK(round_half_up(2.5) == 3);
    CHECK(round_half_up(2.4999) == 2);
    CHECK(pr_rank_dense(2048, 1000, 1.3) == 517);
    CHECK(pr_rank_dense(64, 64, 3) == 11);
    CHECK(pr_rank_dense(4, 4, 2) == 1);
    CHECK(pr_rank_dense(4, 4, 1000) == 1);
    CHECK(pr_rank_dense(3, 5, 1.0001) <= 3);
}

TEST_CASE("PR Tucker-2 ranks agree with exhaustive search") {
    CHECK(pr_ranks_tucker2(64, 64, 3, 3) == std::pair<std::size_t, std::size_t>{31, 31});
    for (std::size_t c : {16u, 64u, 128u, 256u, 512u})
        for (double ratio : {2.0, 3.0, 5.0}) {
            auto [r_in, r_out] = pr_ranks_tucker2(c, c, 3, ratio);
            CHECK(r_in == r_out);
            CHECK(r_in == exhaustive_square_rank(c, 3, ratio));
        }
    // proportional split follows the channel ratio
    auto [r_in, r_out] = pr_ranks_tucker2(256, 64, 3, 3);
    CHECK(static_cast<double>(r_out) / static_cast<double>(r_in) == doctest::Approx(4.0).epsilon(0.05));
    // huge ratio clamps low
    CHECK(pr_ranks_tucker2(64, 64, 3, 1e9) == std::pair<std::size_t, std::size_t>{1, 1});
    CHECK(pr_ranks_tucker2_area(64, 64, 9, 3) == pr_ranks_tucker2(64, 64, 3, 3));
}

TEST_CASE("weakening interpolates toward full rank") {
    CHECK(apply_weakening(10, 64, 0) == 10);
    CHECK(apply_weakening(10, 64, 1) == 64);
    CHECK(apply_weakening(10, 64, 0.5) == 37);
    CHECK(apply_weakening(0, 64, 0) == 1);
    CHECK_THROWS_AS(apply_weakening(10, 64, 1.5), ArgumentError);
    for (std::size_t r = 0; r <= 40; r += 5) {
        std::size_t prev = 0;
        for (int i = 0; i <= 20; ++i) {
            const auto v = apply_weakening(r, 40, i / 20.0);
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("quantization rules on a generated table") {
    CHECK(quantize_rank(17, 32, 64) == 32);
    CHECK(quantize_rank(517, 32, 1000) == 512);
    CHECK(quantize_rank(48, 32, 64) == 64);
    CHECK(quantize_rank(60, 32, 48) == 48);
    std::mt19937_64 rng(20);
    std::uniform_int_distribution<std::size_t> rd(1, 600), qd(1, 64), md(1, 700);
    for (int i = 0; i < 200; ++i) {
        const auto r = rd(rng), q = qd(rng), m = md(rng);
        const auto got = quantize_rank(r, q, m);
        CHECK(got == quantize_oracle(r, q, m));
        CHECK((got % q == 0 || got == m));
    }
}

TEST_CASE("VBMF finds a planted rank-3 signal") {
    std::mt19937_64 rng(21);
    int hits = 0;
    for (int trial = 0; trial < 100; ++trial) hits += vbmf_rank(planted_rank3(rng, 0.1)) == 3;
    CHECK(hits >= 95);
    CHECK(vbmf_rank(Tensor({64, 64})) == 0);
    auto tall = planted_rank3(rng, 0.1);
    CHECK(vbmf_rank(tall) == vbmf_rank(transpose(tall)));
}

TEST_CASE("VBMF noise minimizer agrees with a grid search") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t L = 16 + 8 * (trial % 4), M = L + 16 * (trial % 3);
        Tensor w = Tensor::randn({L, M}, rng, 0.2 + 0.1 * (trial % 5));
        auto sig = Tensor::randn({L, 2}, rng, 3.0), fac = Tensor::randn({2, M}, rng);
        auto plant = oracle::naive_gemm(sig, fac);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += plant[i];

        auto s = oracle::singular_values_via_eig(w);
        auto est = evbmf(w);
        REQUIRE(est.lower_bound < est.upper_bound);

        // library energy agrees with the oracle energy up to a constant
        const double a = est.lower_bound * 1.5, b = est.upper_bound * 0.7;
        CHECK(evb_free_energy(a, s, L, M) - evb_free_energy(b, s, L, M) ==
              doctest::Approx(oracle::evb_energy(a, s, L, M) - oracle::evb_energy(b, s, L, M)).epsilon(1e-8));

        const int n = 10'000;
        const double lo = std::log(est.lower_bound), hi = std::log(est.upper_bound);
        const double step = (hi - lo) / (n - 1);
        double best_t = lo, best_f = 1e300;
        for (int i = 0; i < n; ++i) {
            const double t = lo + step * i;
            const double f = oracle::evb_energy(std::exp(t), s, double(L), double(M));
            if (f < best_f) best_f = f, best_t = t;
        }
        CHECK(std::abs(std::log(est.sigma2) - best_t) <= step * (1 + 1e-9));
    }
}

TEST_CASE("plan_ranks: modes, determinism and weight independence") {
    const auto arch = build_resnet(50);
    CompressionConfig cfg;
    auto plan = plan_ranks(arch, cfg);
    CHECK(plan.decomposed_count() == 45);
    CHECK(plan_ranks(arch, cfg) == plan);

    std::size_t parametric = 0;
    for (const auto& l : arch.layers) parametric += l.parametric();
    CHECK(plan.entries.size() == parametric);

    PlanTotals sum;
    for (const auto& e : plan.entries) {
        sum.params_before += e.params_before, sum.params_after += e.params_after;
        sum.macs_before += e.macs_before, sum.macs_after += e.macs_after;
        if (e.decomposition == Decomposition::unchanged) {
            CHECK(e.params_before == e.params_after);
            CHECK(e.macs_before == e.macs_after);
        } else {
            CHECK(e.ranks.size() == e.raw_ranks.size());
            // quantization slack bound against the raw rank
            const double c = e.layer == "fc" ? cfg.final_dense_ratio : cfg.target_ratio;
            const double r = static_cast<double>(*std::min_element(e.raw_ranks.begin(), e.raw_ranks.end()));
            CHECK(static_cast<double>(e.params_after) <=
                  static_cast<double>(e.params_before) / c * (1 + 2.0 * double(cfg.rank_quantum) / r));
        }
    }
    CHECK(sum == plan.totals);
    CHECK(plan.achieved_ratio == doctest::Approx(double(sum.params_before) / double(sum.params_after)));
    CHECK(plan.find("fc")->raw_ranks == std::vector<std::size_t>{517});
    CHECK(plan.find("fc")->ranks == std::vector<std::size_t>{512});

    auto a = random_checkpoint(arch, 1), b = random_checkpoint(arch, 2);
    CHECK(plan_ranks(arch, cfg, &a) == plan_ranks(arch, cfg, &b));

    CompressionConfig m1 = cfg, van = cfg;
    m1.mode = CompressionMode::parse("mode1");
    van.mode = CompressionMode::parse("vanilla");
    auto p1 = plan_ranks(arch, m1), pv = plan_ranks(arch, van);
    CHECK(p1.decomposed_count() == 17);
    CHECK(pv.decomposed_count() == 53);
    for (const auto& e : p1.entries)
        if (e.decomposition != Decomposition::unchanged)
            CHECK(pv.find(e.layer)->decomposition != Decomposition::unchanged);
}

TEST_CASE("plan_ranks: barely-compressing targets land near ratio 1") {
    const auto arch = build_resnet(50);
    CompressionConfig cfg;
    cfg.mode = CompressionMode::parse("vanilla");
    cfg.target_ratio = 1.0001;
    cfg.final_dense_ratio = 1.0;
    cfg.rank_quantum = 1;
    auto plan = plan_ranks(arch, cfg);
    CHECK(plan.achieved_ratio == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("plan_ranks: VBMF path and config errors") {
    const auto arch = build_resnet(18, 32);
    CompressionConfig cfg;
    cfg.method = RankMethod::vbmf;
    CHECK_THROWS_AS(plan_ranks(arch, cfg), ConfigError);
    auto ckpt = random_checkpoint(arch, 3);
    auto p0 = plan_ranks(arch, cfg, &ckpt);
    cfg.weakening = 1.0;
    auto p1 = plan_ranks(arch, cfg, &ckpt);
    for (std::size_t i = 0; i < p0.entries.size(); ++i)
        for (std::size_t k = 0; k < p0.entries[i].raw_ranks.size(); ++k)
            CHECK(p0.entries[i].raw_ranks[k] <= p1.entries[i].raw_ranks[k]);
    CHECK(p1.achieved_ratio <= p0.achieved_ratio);

    CompressionConfig bad;
    bad.target_ratio = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.rank_quantum = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.final_dense_ratio = 0.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.weakening = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
