#include <cmath>

#include "doctest.h"
#include "mfnet/tsne.hpp"
#include "test_util.hpp"

using namespace mfnet;
using namespace mfnet::testutil;

namespace {

// two well separated gaussian blobs in d dims
std::pair<Tensor, std::vector<int>> two_clusters(int64_t n, int64_t d, uint64_t seed) {
    SeededRng rng(seed);
    Tensor x({n, d});
    std::vector<int> labels;
    for (int64_t i = 0; i < n; ++i) {
        int cls = i < n / 2 ? 0 : 1;
        labels.push_back(cls);
        double offset = cls == 0 ? -5.0 : 5.0;
        for (int64_t f = 0; f < d; ++f) x.at2(i, f) = rng.normal(offset, 1.0);
    }
    return {std::move(x), std::move(labels)};
}

double knn1_purity(const Tensor& coords, const std::vector<int>& labels) {
    int64_t n = coords.dim(0);
    int64_t correct = 0;
    for (int64_t i = 0; i < n; ++i) {
        double best = 0.0;
        int64_t best_j = -1;
        for (int64_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double dx = coords.at2(i, 0) - coords.at2(j, 0);
            double dy = coords.at2(i, 1) - coords.at2(j, 1);
            double dist = dx * dx + dy * dy;
            if (best_j < 0 || dist < best) {
                best = dist;
                best_j = j;
            }
        }
        if (labels[static_cast<size_t>(best_j)] == labels[static_cast<size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("tsne separates two gaussian clusters") {
    PrecisionGuard fp64(Precision::fp64);
    auto [x, labels] = two_clusters(100, 10, 5);
    TsneConfig cfg;
    cfg.perplexity = 20.0;
    cfg.iterations = 500;
    cfg.seed = 1;
    EmbeddingSet e = tsne_embed(x, cfg, labels);

    CHECK(e.coords.shape() == std::vector<int64_t>{100, 2});
    CHECK(e.coords.all_finite());
    CHECK(knn1_purity(e.coords, labels) >= 0.9);
    CHECK(e.final_kl < e.post_exaggeration_kl);
    CHECK(e.final_kl >= 0.0);
}

TEST_CASE("tsne is deterministic for a fixed seed") {
    PrecisionGuard fp64(Precision::fp64);
    auto [x, labels] = two_clusters(60, 6, 9);
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    cfg.iterations = 300;
    cfg.seed = 4;
    EmbeddingSet a = tsne_embed(x, cfg, labels);
    EmbeddingSet b = tsne_embed(x, cfg, labels);
    CHECK(bitwise_equal(a.coords, b.coords));
    CHECK(a.final_kl == b.final_kl);
}

TEST_CASE("tsne input validation") {
    TsneConfig cfg;
    cfg.perplexity = 30.0;

    SUBCASE("needs n >= 3 perplexity") {
        Tensor x({10, 4});
        CHECK_THROWS_AS(tsne_embed(x, cfg), ArgumentError);
    }

    SUBCASE("identical points are degenerate") {
        cfg.perplexity = 5.0;
        Tensor x = Tensor::full({30, 4}, 1.0);
        CHECK_THROWS_AS(tsne_embed(x, cfg), ArgumentError);
    }

    SUBCASE("needs at least 2 feature dims") {
        cfg.perplexity = 5.0;
        Tensor x({30, 1});
        CHECK_THROWS_AS(tsne_embed(x, cfg), ArgumentError);
    }
}

TEST_CASE("tsne accepts the reference feature width") {
    PrecisionGuard fp64(Precision::fp64);
    // 1536-dim features as extracted at full scale; modest n keeps this quick
    SeededRng rng(11);
    int64_t n = 96;
    Tensor x({n, 1536});
    std::vector<int> labels;
    for (int64_t i = 0; i < n; ++i) {
        int cls = static_cast<int>(i % 2);
        labels.push_back(cls);
        for (int64_t f = 0; f < 1536; ++f) x.at2(i, f) = rng.normal(cls == 0 ? -1.0 : 1.0, 0.5);
    }
    TsneConfig cfg;
    cfg.perplexity = 15.0;
    cfg.iterations = 260;
    cfg.seed = 2;
    EmbeddingSet e = tsne_embed(x, cfg, labels);
    CHECK(e.coords.dim(0) == n);
    CHECK(e.coords.all_finite());
}
