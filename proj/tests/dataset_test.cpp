#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mfnet/dataset.hpp"
#include "test_util.hpp"

using namespace mfnet;

namespace {

// published per-class totals with their train/validation/test counts
struct ClassRow {
    const char* name;
    int64_t train, val, test, total;
};

const ClassRow kPublishedSplit[] = {
    {"Algae", 1037, 195, 64, 1296},        {"Bivalve", 993, 186, 62, 1241},
    {"Brachiopod", 1011, 189, 63, 1263},   {"Bryozoan", 1162, 218, 72, 1452},
    {"Calcimicrobe", 1036, 194, 64, 1294}, {"Calcisphere", 982, 184, 61, 1227},
    {"Calpionellid", 1129, 212, 70, 1411}, {"Cephalopod", 1039, 195, 64, 1298},
    {"Coral", 1317, 247, 82, 1646},        {"Dolomite", 1023, 192, 63, 1278},
    {"Echinoderm", 1260, 237, 78, 1575},   {"Foraminifer", 1260, 236, 78, 1574},
    {"Gastropod", 1135, 213, 70, 1418},    {"Oncolite", 1218, 228, 76, 1522},
    {"Ooid", 1168, 219, 73, 1460},         {"Ostracod", 1288, 242, 80, 1610},
    {"Pyrite", 996, 186, 62, 1244},        {"Radiolarian", 1259, 236, 78, 1573},
    {"Sponge", 1223, 229, 76, 1528},       {"Stromatolite", 1025, 192, 64, 1281},
    {"Stromatoporoid", 998, 187, 62, 1247}, {"Tubiphytes", 1102, 207, 68, 1377},
};

Manifest synthetic_manifest(const std::vector<std::pair<std::string, int64_t>>& class_sizes) {
    std::vector<ManifestRecord> records;
    for (const auto& [label, count] : class_sizes)
        for (int64_t i = 0; i < count; ++i)
            records.push_back({label + "/" + std::to_string(i) + ".ppm", label, "own", -1});
    return manifest_from_records(std::move(records));
}

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path.string();
}

}  // namespace

TEST_CASE("manifest parsing") {
    SUBCASE("three-row fixture with two classes") {
        std::string path = write_temp("manifest_ok.csv",
                                      "path,label,source\n"
                                      "a.ppm,Algae,literature\n"
                                      "b.ppm,Coral,own\n"
                                      "c.ppm,Algae,own\n");
        Manifest m = load_manifest(path);
        CHECK(m.records.size() == 3);
        CHECK(m.classes == std::vector<std::string>{"Algae", "Coral"});
        CHECK(m.records[0].class_id == 0);
        CHECK(m.records[1].class_id == 1);
    }

    SUBCASE("labels outside the given vocabulary are rejected") {
        std::string path = write_temp("manifest_trilobite.csv",
                                      "path,label,source\n"
                                      "a.ppm,Trilobite,literature\n");
        CHECK_THROWS_WITH_AS(load_manifest(path, microfacies_classes()), doctest::Contains("Trilobite"),
                             ValidationError);
    }

    SUBCASE("duplicate paths are rejected") {
        std::string path = write_temp("manifest_dup.csv",
                                      "path,label,source\n"
                                      "a.ppm,Algae,own\n"
                                      "a.ppm,Coral,own\n");
        CHECK_THROWS_AS(load_manifest(path), ValidationError);
    }

    SUBCASE("wrong header is rejected") {
        std::string path = write_temp("manifest_hdr.csv", "file,class\n");
        CHECK_THROWS_AS(load_manifest(path), ValidationError);
    }

    SUBCASE("the canonical vocabulary has 22 alphabetical names") {
        CHECK(microfacies_classes().size() == 22);
        CHECK(microfacies_classes().front() == "Algae");
        CHECK(microfacies_classes().back() == "Tubiphytes");
        CHECK(std::is_sorted(microfacies_classes().begin(), microfacies_classes().end()));
    }

    SUBCASE("a full-size synthetic manifest parses with matching totals") {
        std::vector<std::pair<std::string, int64_t>> sizes;
        for (const ClassRow& row : kPublishedSplit) sizes.push_back({row.name, row.total});
        Manifest m = synthetic_manifest(sizes);
        CHECK(m.records.size() == 30815);
        CHECK(m.classes.size() == 22);
    }
}

TEST_CASE("split counts reproduce every published integer") {
    int64_t train_total = 0, val_total = 0, test_total = 0, overall = 0;
    for (const ClassRow& row : kPublishedSplit) {
        SplitCounts c = split_counts_for(row.total);
        CHECK(c.train == row.train);
        CHECK(c.validation == row.val);
        CHECK(c.test == row.test);
        train_total += c.train;
        val_total += c.validation;
        test_total += c.test;
        overall += row.total;
    }
    CHECK(train_total == 24661);
    CHECK(val_total == 4624);
    CHECK(test_total == 1530);
    CHECK(overall == 30815);
}

TEST_CASE("split counts satisfy the ceil/floor rule for every size 3..5000") {
    for (int64_t n = 3; n <= 5000; ++n) {
        SplitCounts c = split_counts_for(n);
        CHECK(c.train + c.validation + c.test == n);
        CHECK(c.train >= 0);
        CHECK(c.validation >= 0);
        CHECK(c.test >= 0);
        // ceil(0.8 n): smallest integer >= 4n/5
        CHECK(5 * c.train >= 4 * n);
        CHECK(5 * (c.train - 1) < 4 * n);
        // floor(0.05 n)
        CHECK(20 * c.test <= n);
        CHECK(20 * (c.test + 1) > n);
    }
}

TEST_CASE("stratified split is disjoint, exhaustive and seeded") {
    Manifest m = synthetic_manifest({{"A", 40}, {"B", 23}, {"C", 3}});
    SplitAssignment s1 = stratified_split(m, 7);
    SplitAssignment s2 = stratified_split(m, 7);
    SplitAssignment s3 = stratified_split(m, 8);

    CHECK(s1.assignment == s2.assignment);
    CHECK(s1.assignment != s3.assignment);

    auto train = s1.indices_of(Partition::train);
    auto val = s1.indices_of(Partition::validation);
    auto test = s1.indices_of(Partition::test);
    CHECK(train.size() + val.size() + test.size() == m.records.size());

    // per-class counts follow the rule
    for (const std::string& cls : m.classes) {
        int id = m.class_id_of(cls);
        int64_t n = m.class_count(id);
        SplitCounts expect = split_counts_for(n);
        int64_t tr = 0, va = 0, te = 0;
        for (size_t i = 0; i < m.records.size(); ++i) {
            if (m.records[i].class_id != id) continue;
            switch (s1.assignment[i]) {
                case Partition::train: ++tr; break;
                case Partition::validation: ++va; break;
                case Partition::test: ++te; break;
            }
        }
        CHECK(tr == expect.train);
        CHECK(va == expect.validation);
        CHECK(te == expect.test);
    }

    SUBCASE("too-small classes are rejected") {
        Manifest tiny = synthetic_manifest({{"A", 2}, {"B", 5}});
        CHECK_THROWS_AS(stratified_split(tiny, 1), ValidationError);
    }

    SUBCASE("split csv round trip") {
        auto path = (std::filesystem::temp_directory_path() / "split_rt.csv").string();
        save_split_csv(path, m, s1);
        SplitAssignment back = load_split_csv(path, m);
        CHECK(back.assignment == s1.assignment);
        CHECK(back.seed == s1.seed);
    }
}

TEST_CASE("rebalance undersamples classes above the cap") {
    Manifest m = synthetic_manifest({{"A", 250}, {"B", 80}});

    SUBCASE("cap above the max size is a no-op") {
        Manifest r = rebalance(m, 500, 3);
        CHECK(r.records.size() == m.records.size());
    }

    SUBCASE("cap 100 keeps exactly 100 of the oversized class") {
        Manifest r = rebalance(m, 100, 3);
        CHECK(r.class_count(r.class_id_of("A")) == 100);
        CHECK(r.class_count(r.class_id_of("B")) == 80);
    }

    SUBCASE("same seed keeps the same survivors") {
        Manifest r1 = rebalance(m, 100, 3);
        Manifest r2 = rebalance(m, 100, 3);
        std::set<std::string> p1, p2;
        for (const auto& rec : r1.records) p1.insert(rec.path);
        for (const auto& rec : r2.records) p2.insert(rec.path);
        CHECK(p1 == p2);
    }
}

TEST_CASE("batch iteration") {
    std::vector<int> part;
    for (int i = 100; i < 110; ++i) part.push_back(i);

    SUBCASE("10 records in batches of 4 gives 4,4,2") {
        auto batches = batch_iter(part, 4, 9, 1);
        REQUIRE(batches.size() == 3);
        CHECK(batches[0].size() == 4);
        CHECK(batches[1].size() == 4);
        CHECK(batches[2].size() == 2);
    }

    SUBCASE("one epoch covers the partition exactly once") {
        auto batches = batch_iter(part, 3, 9, 1);
        std::multiset<int> seen;
        for (const auto& b : batches) seen.insert(b.begin(), b.end());
        CHECK(seen == std::multiset<int>(part.begin(), part.end()));
    }

    SUBCASE("epochs permute differently but reproducibly") {
        auto e1 = batch_iter(part, 10, 9, 1);
        auto e2 = batch_iter(part, 10, 9, 2);
        auto e1_again = batch_iter(part, 10, 9, 1);
        CHECK(e1[0] != e2[0]);
        CHECK(e1[0] == e1_again[0]);
    }
}
