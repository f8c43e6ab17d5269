#include <doctest.h>

#include <random>

#include "lrd/error.hpp"
#include "lrd/linalg.hpp"
#include "oracles.hpp"

using namespace lrd;

namespace {

Tensor diag_product(const SvdResult& r) {
    Tensor us = r.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= r.s[j];
    return oracle::naive_gemm(us, r.vt);
}

double rank_r_error(const Tensor& m, std::size_t r) {
    auto f = truncated_svd(m, r);
    return relative_error(gemm(f.left, f.right), m);
}

}  // namespace

TEST_CASE("unfold shapes and fold round trip") {
    std::mt19937_64 rng(1);
    auto t = Tensor::randn({2, 3, 4}, rng);
    CHECK(unfold(t, 0).shape() == Shape{2, 12});
    CHECK(unfold(t, 1).shape() == Shape{3, 8});
    CHECK(unfold(t, 2).shape() == Shape{4, 6});
    CHECK_THROWS_AS(unfold(t, 3), ArgumentError);

    // remaining modes ascending, last fastest: unfold(t,1)(j, i*4+k) = t(i,j,k)
    auto u1 = unfold(t, 1);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k) CHECK(u1(j, i * 4 + k) == t[(i * 3 + j) * 4 + k]);

    auto w = Tensor::randn({4, 4, 3, 3}, rng);
    for (std::size_t mode = 0; mode < 4; ++mode) CHECK(fold(unfold(w, mode), mode, w.shape()) == w);
}

TEST_CASE("svd of simple matrices") {
    auto s = svd(Tensor::identity(3)).s;
    CHECK(s == std::vector<double>{1, 1, 1});
    auto d = svd(Tensor::matrix(3, 3, {3, 0, 0, 0, 2, 0, 0, 0, 1})).s;
    CHECK(d[0] == doctest::Approx(3));
    CHECK(d[1] == doctest::Approx(2));
    CHECK(d[2] == doctest::Approx(1));
    CHECK_THROWS_AS(svd(Tensor({2, 2, 2})), ArgumentError);
}

TEST_CASE("svd matches the Jacobi eigenvalue oracle and its invariants") {
    std::mt19937_64 rng(2);
    for (auto [m, n] : {std::pair{5, 4}, {4, 5}, {7, 7}, {12, 3}, {1, 6}}) {
        auto a = Tensor::randn({std::size_t(m), std::size_t(n)}, rng);
        auto r = svd(a);
        const std::size_t k = std::min(m, n);
        REQUIRE(r.s.size() == k);
        CHECK(relative_error(diag_product(r), a) <= 1e-10);

        auto expected = oracle::singular_values_via_eig(a);
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(r.s[i] == doctest::Approx(expected[i]).epsilon(1e-9));
            CHECK(r.s[i] >= 0.0);
            if (i) CHECK(r.s[i] <= r.s[i - 1]);
        }
        auto utu = oracle::naive_gemm(oracle::naive_transpose(r.u), r.u);
        auto vvt = oracle::naive_gemm(r.vt, oracle::naive_transpose(r.vt));
        CHECK(oracle::max_abs_diff(utu, Tensor::identity(k)) <= 1e-10);
        CHECK(oracle::max_abs_diff(vvt, Tensor::identity(k)) <= 1e-10);

        // largest-magnitude entry of each u column is non-negative
        for (std::size_t j = 0; j < k; ++j) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < r.u.rows(); ++i)
                if (std::abs(r.u(i, j)) > std::abs(r.u(best, j))) best = i;
            CHECK(r.u(best, j) >= 0.0);
        }
        auto again = svd(a);
        CHECK(again.u == r.u);
        CHECK(again.vt == r.vt);
        CHECK(again.s == r.s);
    }
}

TEST_CASE("svd rejects non-finite input") {
    auto a = Tensor::identity(2);
    a[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(svd(a), ArgumentError);
}

TEST_CASE("truncated svd exactness, Eckart-Young residual and balanced split") {
    std::mt19937_64 rng(3);
    auto m = Tensor::randn({8, 6}, rng);
    CHECK(rank_r_error(m, 6) <= 1e-8);
    CHECK_THROWS_AS(truncated_svd(m, 0), ArgumentError);
    CHECK_THROWS_AS(truncated_svd(m, 7), ArgumentError);

    auto x = Tensor::randn({5, 1}, rng), y = Tensor::randn({1, 7}, rng);
    CHECK(rank_r_error(oracle::naive_gemm(x, y), 1) <= 1e-10);

    const auto s = oracle::singular_values_via_eig(m);
    double total = 0.0;
    for (double v : s) total += v * v;
    double prev = 1e300;
    for (std::size_t r = 1; r <= 6; ++r) {
        double tail = 0.0;
        for (std::size_t i = r; i < s.size(); ++i) tail += s[i] * s[i];
        auto f = truncated_svd(m, r);
        Tensor diff = gemm(f.left, f.right);
        double err2 = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) err2 += (diff[i] - m[i]) * (diff[i] - m[i]);
        if (tail > 1e-20) CHECK(err2 == doctest::Approx(tail).epsilon(1e-8));
        const double e = std::sqrt(err2 / total);
        CHECK(e <= prev + 1e-15);
        prev = e;

        // column j of left and row j of right both have norm sqrt(s_j)
        for (std::size_t j = 0; j < r; ++j) {
            double ln = 0.0, rn = 0.0;
            for (std::size_t i = 0; i < 8; ++i) ln += f.left(i, j) * f.left(i, j);
            for (std::size_t i = 0; i < 6; ++i) rn += f.right(j, i) * f.right(j, i);
            CHECK(ln == doctest::Approx(s[j]).epsilon(1e-9));
            CHECK(rn == doctest::Approx(s[j]).epsilon(1e-9));
        }
    }
}

TEST_CASE("truncated svd beats random factorizations of the same rank") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        auto m = Tensor::randn({8, 6}, rng);
        const double best = rank_r_error(m, 3);
        for (int k = 0; k < 1000; ++k) {
            auto a = Tensor::randn({8, 3}, rng), b = Tensor::randn({3, 6}, rng);
            // least-squares scale of a random product, so the competitor is not handicapped by norm
            auto p = oracle::naive_gemm(a, b);
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) num += p[i] * m[i], den += p[i] * p[i];
            for (double& v : p.data()) v *= num / den;
            CHECK(best <= relative_error(p, m));
        }
    }
}

TEST_CASE("leading left singular vectors span the top subspace") {
    std::mt19937_64 rng(5);
    auto a = Tensor::randn({6, 20}, rng);
    auto u = leading_left_singular_vectors(a, 3);
    auto ref = svd(a).u;
    // projector equality is sign- and rotation-invariant
    auto p1 = oracle::naive_gemm(u, oracle::naive_transpose(u));
    Tensor ref3({6, 3});
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) ref3(i, j) = ref(i, j);
    auto p2 = oracle::naive_gemm(ref3, oracle::naive_transpose(ref3));
    CHECK(oracle::max_abs_diff(p1, p2) <= 1e-9);
    CHECK_THROWS_AS(leading_left_singular_vectors(a, 7), ArgumentError);
}

TEST_CASE("mode_mult against the GEMM oracle") {
    std::mt19937_64 rng(6);
    auto t = Tensor::randn({4, 5, 3}, rng);
    for (std::size_t mode = 0; mode < 3; ++mode) {
        auto m = Tensor::randn({7, t.dim(mode)}, rng);
        auto out = mode_mult(t, m, mode);
        Shape expect = t.shape();
        expect[mode] = 7;
        CHECK(out.shape() == expect);
        auto ref = oracle::naive_gemm(m, unfold(t, mode));
        CHECK(oracle::max_abs_diff(unfold(out, mode), ref) <= 1e-12);
        CHECK(mode_mult(t, Tensor::identity(t.dim(mode)), mode) == t);
    }
    auto mat = Tensor::randn({2, 3}, rng), left = Tensor::randn({5, 2}, rng);
    CHECK(oracle::max_abs_diff(mode_mult(mat, left, 0), oracle::naive_gemm(left, mat)) <= 1e-12);
    CHECK_THROWS_AS(mode_mult(t, Tensor({2, 2}), 0), ArgumentError);
    CHECK_THROWS_AS(mode_mult(t, Tensor({2, 4}), 3), ArgumentError);
}

TEST_CASE("gemm against the naive loop oracle") {
    std::mt19937_64 rng(7);
    auto a = Tensor::randn({32, 48}, rng), b = Tensor::randn({48, 16}, rng);
    auto c = gemm(a, b);
    auto ref = oracle::naive_gemm(a, b);
    CHECK(relative_error(c, ref) <= 1e-12);
    CHECK(gemm(a, b) == c);
    CHECK(gemm(a, Tensor::identity(48)) == a);
    auto x = Tensor::randn({1, 9}, rng), y = Tensor::randn({9, 1}, rng);
    double dot = 0.0;
    for (std::size_t i = 0; i < 9; ++i) dot += x[i] * y[i];
    CHECK(gemm(x, y)[0] == doctest::Approx(dot).epsilon(1e-14));
    CHECK_THROWS_AS(gemm(a, a), ArgumentError);
    CHECK(transpose(a) == oracle::naive_transpose(a));
}
