#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "mfnet/tensor.hpp"
#include "test_util.hpp"

using namespace mfnet;
using namespace mfnet::testutil;

TEST_CASE("tensor shape invariants") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor(std::vector<int64_t>{}), DimensionError);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST_CASE("matmul identity and hand sums") {
    PrecisionGuard fp64(Precision::fp64);
    Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    SeededRng rng(11);
    Tensor x = seeded_random(rng, {3, 4}, Distribution::uniform_in(-1, 1));
    CHECK(bitwise_equal(matmul(eye, x), x));

    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.at2(0, 0) == 3.0);
    CHECK(c.at2(1, 0) == 7.0);
}

TEST_CASE("matmul equals triple-loop oracle") {
    PrecisionGuard fp64(Precision::fp64);
    SeededRng rng(7);
    Tensor a = seeded_random(rng, {7, 5}, Distribution::uniform_in(-1, 1));
    Tensor b = seeded_random(rng, {5, 3}, Distribution::uniform_in(-1, 1));
    Tensor c = matmul(a, b);
    for (int64_t i = 0; i < 7; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            double sum = 0.0;
            for (int64_t k = 0; k < 5; ++k) sum += a.at2(i, k) * b.at2(k, j);
            CHECK(std::abs(c.at2(i, j) - sum) < 1e-12);
        }
}

TEST_CASE("matmul shape errors name both shapes") {
    Tensor a({2, 3}), b({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2,3]"), DimensionError);
}

TEST_CASE("matmul associativity within 1e-9 relative") {
    PrecisionGuard fp64(Precision::fp64);
    SeededRng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = seeded_random(rng, {4, 6}, Distribution::uniform_in(-1, 1));
        Tensor b = seeded_random(rng, {6, 5}, Distribution::uniform_in(-1, 1));
        Tensor c = seeded_random(rng, {5, 3}, Distribution::uniform_in(-1, 1));
        Tensor left = matmul(matmul(a, b), c);
        Tensor right = matmul(a, matmul(b, c));
        for (int64_t i = 0; i < left.size(); ++i) CHECK(rel_err(left[i], right[i]) < 1e-9);
    }
}

TEST_CASE("pad2d") {
    SeededRng rng(5);
    Tensor x = seeded_random(rng, {1, 1, 2, 2}, Distribution::uniform_in(0, 1));
    CHECK(bitwise_equal(pad2d(x, 0), x));

    Tensor ones = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor padded = pad2d(ones, 1);
    CHECK(padded.shape() == std::vector<int64_t>{1, 1, 4, 4});
    double total = 0.0;
    for (int64_t i = 0; i < padded.size(); ++i) total += padded[i];
    CHECK(total == 4.0);
    CHECK(padded.at4(0, 0, 1, 1) == 1.0);
    CHECK(padded.at4(0, 0, 0, 0) == 0.0);

    Tensor r = seeded_random(rng, {2, 3, 4, 5}, Distribution::uniform_in(-1, 1));
    double sum_in = std::accumulate(r.data(), r.data() + r.size(), 0.0);
    Tensor rp = pad2d(r, 2);
    double sum_out = std::accumulate(rp.data(), rp.data() + rp.size(), 0.0);
    CHECK(std::abs(sum_in - sum_out) < 1e-12);
}

TEST_CASE("pad2d then center crop is identity") {
    SeededRng rng(9);
    Tensor x = seeded_random(rng, {2, 2, 3, 3}, Distribution::uniform_in(-1, 1));
    Tensor p = pad2d(x, 2);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 2; ++c)
            for (int64_t i = 0; i < 3; ++i)
                for (int64_t j = 0; j < 3; ++j) CHECK(p.at4(n, c, i + 2, j + 2) == x.at4(n, c, i, j));
}

TEST_CASE("topk_indices") {
    CHECK(topk_indices({0.1, 0.7, 0.2}, 1) == std::vector<int>{1});
    CHECK(topk_indices({0.5, 0.5}, 2) == std::vector<int>{0, 1});
    CHECK_THROWS_AS(topk_indices({0.5}, 2), ArgumentError);

    SeededRng rng(13);
    std::vector<double> v(22);
    for (double& x : v) x = rng.next_unit();
    std::vector<int> top3 = topk_indices(v, 3);

    // full-sort oracle with the same tie rule
    std::vector<int> all(v.size());
    std::iota(all.begin(), all.end(), 0);
    std::stable_sort(all.begin(), all.end(), [&](int a, int b) { return v[a] > v[b]; });
    CHECK(top3 == std::vector<int>(all.begin(), all.begin() + 3));

    std::vector<int> everything = topk_indices(v, static_cast<int>(v.size()));
    std::sort(everything.begin(), everything.end());
    std::vector<int> expected(v.size());
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(everything == expected);  // permutation of all indices
}

TEST_CASE("seeded_random determinism and moments") {
    SeededRng a(42), b(42);
    Tensor ta = seeded_random(a, {100}, Distribution::normal_with(0, 1));
    Tensor tb = seeded_random(b, {100}, Distribution::normal_with(0, 1));
    CHECK(bitwise_equal(ta, tb));

    SeededRng rng(1);
    Tensor u = seeded_random(rng, {100000}, Distribution::uniform_in(0, 1));
    double mean = std::accumulate(u.data(), u.data() + u.size(), 0.0) / static_cast<double>(u.size());
    CHECK(std::abs(mean - 0.5) < 0.01);

    Tensor g = seeded_random(rng, {100000}, Distribution::normal_with(0, 1));
    double gm = std::accumulate(g.data(), g.data() + g.size(), 0.0) / static_cast<double>(g.size());
    double var = 0.0;
    for (int64_t i = 0; i < g.size(); ++i) var += (g[i] - gm) * (g[i] - gm);
    var /= static_cast<double>(g.size());
    CHECK(std::abs(var - 1.0) < 0.05);

    CHECK_THROWS_AS(seeded_random(rng, {3}, Distribution::uniform_in(1, 0)), ArgumentError);
    CHECK_THROWS_AS(seeded_random(rng, {3}, Distribution::normal_with(0, 0)), ArgumentError);
}

TEST_CASE("rng split streams are independent of draw position") {
    SeededRng a(5);
    a.next_u64();
    a.next_u64();
    SeededRng b(5);
    CHECK(a.split(3).next_u64() == b.split(3).next_u64());
    CHECK(a.split(3).next_u64() != b.split(4).next_u64());
}

TEST_CASE("fp32 mode quantizes results") {
    PrecisionGuard fp32(Precision::fp32);
    SeededRng rng(2);
    Tensor t = seeded_random(rng, {64}, Distribution::uniform_in(0, 1));
    for (int64_t i = 0; i < t.size(); ++i)
        CHECK(t[i] == static_cast<double>(static_cast<float>(t[i])));
}
