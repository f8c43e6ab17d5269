#include <doctest.h>

#include <random>

#include "lrd/arch.hpp"
#include "lrd/bench.hpp"
#include "lrd/decompose.hpp"
#include "lrd/error.hpp"
#include "lrd/linalg.hpp"
#include "lrd/rank_select.hpp"
#include "lrd/serialize.hpp"
#include "oracles.hpp"

using namespace lrd;

namespace {

LayerSpec conv_layer(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                     std::size_t pad, std::size_t hw) {
    LayerSpec l;
    l.name = "conv";
    ConvSpec c;
    c.c_in = c_in, c.c_out = c_out, c.kh = c.kw = k, c.stride = stride, c.padding = pad;
    c.in_h = c.in_w = hw;
    l.kind = c;
    l.role = k == 1 ? Role::pointwise : Role::spatial;
    l.out_h = l.out_w = conv_out_dim(hw, k, stride, pad);
    return l;
}

}  // namespace

TEST_CASE("conv_forward matches the direct loop oracle on random cases") {
    std::mt19937_64 rng(40);
    std::uniform_int_distribution<std::size_t> ch(1, 6), kk(1, 4), st(1, 3), pd(0, 2), sz(4, 10), nb(1, 2);
    for (int i = 0; i < 50; ++i) {
        ConvSpec c;
        c.c_in = ch(rng), c.c_out = ch(rng), c.kh = kk(rng), c.kw = kk(rng);
        c.stride = st(rng), c.padding = pd(rng);
        const std::size_t h = std::max(sz(rng), c.kh), w = std::max(sz(rng), c.kw);
        auto wt = Tensor::randn({c.c_out, c.c_in, c.kh, c.kw}, rng);
        auto x = Tensor::randn({nb(rng), c.c_in, h, w}, rng);
        auto got = conv_forward(c, wt, x);
        auto ref = oracle::direct_conv(c, wt, x);
        REQUIRE(got.shape() == ref.shape());
        CHECK(oracle::max_abs_diff(got, ref) <= 1e-10);
    }
}

TEST_CASE("conv_forward special cases") {
    std::mt19937_64 rng(41);
    ConvSpec id;
    id.c_in = id.c_out = 3, id.kh = id.kw = 3, id.padding = 1;
    Tensor w({3, 3, 3, 3});
    for (std::size_t c = 0; c < 3; ++c) w[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
    auto x = Tensor::randn({2, 3, 5, 6}, rng);
    CHECK(conv_forward(id, w, x) == x);

    ConvSpec pw;
    pw.c_in = 4, pw.c_out = 5;
    auto w1 = Tensor::randn({5, 4, 1, 1}, rng);
    auto x1 = Tensor::randn({1, 4, 3, 3}, rng);
    auto ref = oracle::naive_gemm(w1.reshaped({5, 4}), x1.reshaped({4, 9}));
    CHECK(oracle::max_abs_diff(conv_forward(pw, w1, x1).reshaped({5, 9}), ref) <= 1e-12);
    CHECK_THROWS_AS(conv_forward(pw, w1, Tensor({1, 3, 3, 3})), ArgumentError);

    auto wd = Tensor::randn({3, 4}, rng);
    auto bias = Tensor::randn({3}, rng);
    auto xd = Tensor::randn({2, 4}, rng);
    auto yd = dense_forward(wd, bias, xd);
    auto refd = oracle::naive_gemm(xd, oracle::naive_transpose(wd));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(yd(i, j) == doctest::Approx(refd(i, j) + bias[j]));
}

TEST_CASE("full-rank chains reproduce every stage exactly") {
    std::mt19937_64 rng(42);
    auto layer = conv_layer(8, 12, 3, 2, 1, 10);
    auto w = Tensor::randn({12, 8, 3, 3}, rng);
    auto d = decompose_spatial_tucker2(w, 8, 12);
    auto specs = chain_conv_specs(*layer.conv(), d);
    REQUIRE(specs.size() == 3);
    CHECK(specs[0].stride == 1);
    CHECK(specs[1].stride == 2);
    CHECK(specs[1].padding == 1);
    CHECK(specs[2].padding == 0);

    auto r = bench_layer(layer, w, std::nullopt, d, layer_input_shape(layer, 1), 3, 1, 7);
    CHECK(r.full_rank);
    CHECK(r.original_time_ns > 0);
    CHECK(r.decomposed_time_ns > 0);
    CHECK(r.speedup > 0);
    CHECK(r.checksum_rel_diff <= 1e-3);
    CHECK(std::isfinite(r.checksum));
    CHECK(r.input_shape == Shape{1, 8, 10, 10});
    CHECK_THROWS_AS(bench_layer(layer, w, std::nullopt, d, r.input_shape, 2, 1), ArgumentError);

    auto lossy = decompose_spatial_tucker2(w, 2, 2);
    auto rl = bench_layer(layer, w, std::nullopt, lossy, r.input_shape, 3, 1, 7);
    CHECK_FALSE(rl.full_rank);
}

TEST_CASE("median timer") {
    int calls = 0;
    auto t = median_time_ns([&] { ++calls; }, 5, 2);
    CHECK(calls == 7);
    CHECK(t >= 0);
}

TEST_CASE("mode comparison report") {
    const auto arch = build_resnet(18, 32);
    CompressionConfig van, m3;
    van.mode = CompressionMode::parse("vanilla");
    m3.mode = CompressionMode::parse("mode3");
    BenchOptions opts;
    opts.reps = 3;
    opts.warmup = 1;
    auto report = compare_modes(arch, std::vector<CompressionConfig>{van, m3}, opts);
    REQUIRE(report.rows.size() == 3);
    const ModeRow* rv = nullptr;
    const ModeRow* r3 = nullptr;
    const ModeRow* ro = nullptr;
    for (const auto& r : report.rows) {
        if (r.mode == "vanilla") rv = &r;
        if (r.mode == "mode3") r3 = &r;
        if (r.mode == "original") ro = &r;
        CHECK(r.total_time_ns > 0);
        CHECK(r.speedup_vs_original > 0);
    }
    REQUIRE((rv && r3 && ro));
    CHECK(r3->macs_after > rv->macs_after);
    CHECK(ro->params_after == count_params(arch).total);
    CHECK(ro->speedup_vs_original == 1.0);
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        CHECK(report.rows[i - 1].total_time_ns <= report.rows[i].total_time_ns);
    CHECK(report_from_json(report_to_json(report)) == report);
    CHECK(format_mode_table(report).find("mode3") != std::string::npos);

    // a plan that decomposes nothing reuses the original timings
    CompressionConfig none;
    none.mode = CompressionMode::custom({"zzz"});
    auto same = compare_modes(arch, std::vector<CompressionConfig>{none}, opts);
    for (const auto& r : same.rows) CHECK(r.speedup_vs_original == 1.0);
}
