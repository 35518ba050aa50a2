#include <cmath>

#include "doctest.h"
#include "mfnet/metrics.hpp"
#include "test_util.hpp"

using namespace mfnet;
using namespace mfnet::testutil;

TEST_CASE("confusion matrix") {
    SUBCASE("perfect predictions are diagonal") {
        std::vector<int> labels = {0, 1, 2, 1, 0};
        ConfusionMatrix cm = confusion_matrix(labels, labels, 3);
        CHECK(cm.trace() == 5);
        CHECK(cm.total() == 5);
    }

    SUBCASE("hand-counted 2x2 case") {
        ConfusionMatrix cm = confusion_matrix({0, 1, 1}, {0, 0, 1}, 2);
        CHECK(cm.counts[0][0] == 1);
        CHECK(cm.counts[0][1] == 0);
        CHECK(cm.counts[1][0] == 1);
        CHECK(cm.counts[1][1] == 1);
    }

    SUBCASE("random sample matches a pairwise tally oracle") {
        SeededRng rng(1);
        std::vector<int> t, p;
        for (int i = 0; i < 500; ++i) {
            t.push_back(static_cast<int>(rng.next_u64() % 22));
            p.push_back(static_cast<int>(rng.next_u64() % 22));
        }
        ConfusionMatrix cm = confusion_matrix(t, p, 22);
        for (int a = 0; a < 22; ++a)
            for (int b = 0; b < 22; ++b) {
                int64_t count = 0;
                for (size_t i = 0; i < t.size(); ++i)
                    if (t[i] == a && p[i] == b) ++count;
                CHECK(cm.counts[static_cast<size_t>(a)][static_cast<size_t>(b)] == count);
            }
    }

    SUBCASE("label range is checked") {
        CHECK_THROWS_AS(confusion_matrix({0, 3}, {0, 0}, 2), ArgumentError);
        CHECK_THROWS_AS(confusion_matrix({0}, {0, 1}, 2), ArgumentError);
    }
}

TEST_CASE("metrics from the confusion matrix") {
    SUBCASE("hand computation on the 2x2 case") {
        ConfusionMatrix cm = confusion_matrix({0, 1, 1}, {0, 0, 1}, 2);
        MetricsReport r = metrics_from_cm(cm);
        CHECK(std::abs(r.precision[0].value - 0.5) < 1e-12);
        CHECK(std::abs(r.recall[0].value - 1.0) < 1e-12);
        CHECK(std::abs(r.f1[0].value - 2.0 / 3.0) < 1e-12);
        CHECK(std::abs(r.accuracy - 2.0 / 3.0) < 1e-12);
    }

    SUBCASE("diagonal matrix scores ones everywhere") {
        ConfusionMatrix cm = confusion_matrix({0, 1, 2}, {0, 1, 2}, 3);
        MetricsReport r = metrics_from_cm(cm);
        for (int c = 0; c < 3; ++c) {
            CHECK(r.precision[static_cast<size_t>(c)].value == 1.0);
            CHECK(r.recall[static_cast<size_t>(c)].value == 1.0);
            CHECK(r.f1[static_cast<size_t>(c)].value == 1.0);
        }
        CHECK(r.accuracy == 1.0);
    }

    SUBCASE("a class never seen nor predicted is undefined-flagged") {
        ConfusionMatrix cm = confusion_matrix({0, 1}, {0, 1}, 3);
        MetricsReport r = metrics_from_cm(cm);
        CHECK(!r.precision[2].defined);
        CHECK(!r.recall[2].defined);
        CHECK(!r.f1[2].defined);
        CHECK(r.macro_precision.count == 2);
    }

    SUBCASE("recall equals diagonal over row sums; support-weighted recall equals accuracy") {
        SeededRng rng(2);
        std::vector<int> t, p;
        for (int i = 0; i < 300; ++i) {
            t.push_back(static_cast<int>(rng.next_u64() % 7));
            p.push_back(static_cast<int>(rng.next_u64() % 7));
        }
        ConfusionMatrix cm = confusion_matrix(t, p, 7);
        MetricsReport r = metrics_from_cm(cm);
        double weighted = 0.0;
        for (int64_t c = 0; c < 7; ++c) {
            int64_t row = cm.row_total(c);
            if (row == 0) continue;
            double recall = static_cast<double>(cm.counts[static_cast<size_t>(c)][static_cast<size_t>(c)]) /
                            static_cast<double>(row);
            CHECK(rel_err(r.recall[static_cast<size_t>(c)].value, recall) < 1e-12);
            weighted += recall * static_cast<double>(row);
        }
        CHECK(rel_err(weighted / static_cast<double>(cm.total()), r.accuracy) < 1e-12);
    }

    SUBCASE("empty matrix is rejected") {
        ConfusionMatrix cm;
        CHECK_THROWS_AS(metrics_from_cm(cm), ArgumentError);
    }
}

TEST_CASE("top-k accuracy") {
    PrecisionGuard fp64(Precision::fp64);

    SUBCASE("rank miss and hit") {
        Tensor probs = Tensor::from({1, 3}, {0.5, 0.3, 0.2});
        auto acc = topk_accuracy(probs, {2}, {1, 3});
        CHECK(acc[1] == 0.0);
        CHECK(acc[3] == 1.0);
    }

    SUBCASE("non-decreasing in k and exactly 1 at k = classes") {
        SeededRng rng(3);
        Tensor logits = seeded_random(rng, {40, 9}, Distribution::uniform_in(-3, 3));
        std::vector<int> labels;
        for (int i = 0; i < 40; ++i) labels.push_back(static_cast<int>(rng.next_u64() % 9));
        auto acc = topk_accuracy(logits, labels, {1, 2, 3, 5, 9});
        double prev = 0.0;
        for (const auto& [k, a] : acc) {
            CHECK(a >= prev);
            prev = a;
        }
        CHECK(acc[9] == 1.0);
    }

    SUBCASE("matches the full-sort oracle on a 500x22 matrix") {
        SeededRng rng(4);
        Tensor probs = seeded_random(rng, {500, 22}, Distribution::uniform_in(0, 1));
        std::vector<int> labels;
        for (int i = 0; i < 500; ++i) labels.push_back(static_cast<int>(rng.next_u64() % 22));
        auto acc = topk_accuracy(probs, labels, {3});

        int64_t hits = 0;
        for (int64_t i = 0; i < 500; ++i) {
            std::vector<std::pair<double, int>> scored;
            for (int j = 0; j < 22; ++j) scored.push_back({-probs.at2(i, j), j});
            std::sort(scored.begin(), scored.end());
            for (int r = 0; r < 3; ++r)
                if (scored[static_cast<size_t>(r)].second == labels[static_cast<size_t>(i)]) {
                    ++hits;
                    break;
                }
        }
        CHECK(acc[3] == static_cast<double>(hits) / 500.0);
    }

    SUBCASE("k beyond the class count is rejected") {
        Tensor probs({2, 4});
        CHECK_THROWS_AS(topk_accuracy(probs, {0, 1}, {5}), ArgumentError);
    }
}

TEST_CASE("macro statistics use the population stddev and skip undefined") {
    std::vector<MetricValue> constant(5, MetricValue{0.9, true});
    MacroStat s = macro_stats(constant);
    CHECK(std::abs(s.mean - 0.9) < 1e-12);
    CHECK(s.stddev == 0.0);

    std::vector<MetricValue> two = {{0.8, true}, {1.0, true}};
    s = macro_stats(two);
    CHECK(std::abs(s.mean - 0.9) < 1e-12);
    CHECK(std::abs(s.stddev - 0.1) < 1e-12);

    std::vector<MetricValue> with_undef = {{0.8, true}, {0.0, false}, {1.0, true}};
    s = macro_stats(with_undef);
    CHECK(s.count == 2);
    CHECK(std::abs(s.mean - 0.9) < 1e-12);

    std::vector<MetricValue> none = {{0.0, false}};
    CHECK_THROWS_AS(macro_stats(none), ArgumentError);
}
