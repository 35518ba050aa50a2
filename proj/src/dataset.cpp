#include "mfnet/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace mfnet {

std::string to_string(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::validation: return "validation";
        case Partition::test: return "test";
    }
    return "?";
}

int64_t Manifest::class_count(int class_id) const {
    int64_t n = 0;
    for (const ManifestRecord& r : records)
        if (r.class_id == class_id) ++n;
    return n;
}

int Manifest::class_id_of(const std::string& label) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) return -1;
    return static_cast<int>(it - classes.begin());
}

const std::vector<std::string>& microfacies_classes() {
    static const std::vector<std::string> classes = {
        "Algae",       "Bivalve",     "Brachiopod", "Bryozoan",   "Calcimicrobe",   "Calcisphere",
        "Calpionellid", "Cephalopod", "Coral",      "Dolomite",   "Echinoderm",     "Foraminifer",
        "Gastropod",   "Oncolite",    "Ooid",       "Ostracod",   "Pyrite",         "Radiolarian",
        "Sponge",      "Stromatolite", "Stromatoporoid", "Tubiphytes"};
    return classes;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

Manifest manifest_from_records(std::vector<ManifestRecord> records,
                               const std::optional<std::vector<std::string>>& vocabulary) {
    Manifest m;
    if (vocabulary) {
        m.classes = *vocabulary;
        std::sort(m.classes.begin(), m.classes.end());
        std::set<std::string> offenders;
        for (const ManifestRecord& r : records)
            if (!std::binary_search(m.classes.begin(), m.classes.end(), r.label)) offenders.insert(r.label);
        if (!offenders.empty()) {
            std::string msg = "unknown labels:";
            for (const std::string& o : offenders) msg += " '" + o + "'";
            throw ValidationError(msg);
        }
    } else {
        std::set<std::string> labels;
        for (const ManifestRecord& r : records) labels.insert(r.label);
        m.classes.assign(labels.begin(), labels.end());
    }

    std::set<std::string> seen_paths;
    for (const ManifestRecord& r : records)
        if (!seen_paths.insert(r.path).second) throw ValidationError("duplicate path '" + r.path + "'");

    m.records = std::move(records);
    for (ManifestRecord& r : m.records) r.class_id = m.class_id_of(r.label);
    return m;
}

Manifest load_manifest(const std::string& path, const std::optional<std::vector<std::string>>& vocabulary) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("manifest '" + path + "' is empty");
    if (strip_cr(line) != "path,label,source")
        throw ValidationError("manifest header must be 'path,label,source', got '" + strip_cr(line) + "'");

    std::vector<ManifestRecord> records;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 3)
            throw ValidationError("manifest line " + std::to_string(line_no) + " has " +
                                  std::to_string(fields.size()) + " fields, expected 3");
        records.push_back({fields[0], fields[1], fields[2], -1});
    }
    return manifest_from_records(std::move(records), vocabulary);
}

SplitCounts split_counts_for(int64_t class_size) {
    // integer arithmetic keeps ceil(0.8 n) exact: ceil(4n/5) = (4n + 4) / 5
    SplitCounts c;
    c.train = (4 * class_size + 4) / 5;
    c.test = class_size / 20;
    c.validation = class_size - c.train - c.test;
    return c;
}

SplitAssignment stratified_split(const Manifest& manifest, uint64_t seed) {
    int k = static_cast<int>(manifest.classes.size());
    std::vector<std::vector<int>> by_class(static_cast<size_t>(k));
    for (size_t i = 0; i < manifest.records.size(); ++i)
        by_class[static_cast<size_t>(manifest.records[i].class_id)].push_back(static_cast<int>(i));

    for (int c = 0; c < k; ++c)
        if (by_class[static_cast<size_t>(c)].size() < 3)
            throw ValidationError("class '" + manifest.classes[static_cast<size_t>(c)] + "' has only " +
                                  std::to_string(by_class[static_cast<size_t>(c)].size()) +
                                  " records; at least 3 are required");

    SplitAssignment out;
    out.seed = seed;
    out.assignment.assign(manifest.records.size(), Partition::train);
    for (int c = 0; c < k; ++c) {
        std::vector<int>& members = by_class[static_cast<size_t>(c)];
        SeededRng rng(mix_seed(seed, static_cast<uint64_t>(c)));
        // Fisher-Yates with the seeded generator
        for (size_t i = members.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(rng.next_u64() % i);
            std::swap(members[i - 1], members[j]);
        }
        SplitCounts counts = split_counts_for(static_cast<int64_t>(members.size()));
        for (size_t i = 0; i < members.size(); ++i) {
            Partition p = Partition::train;
            if (static_cast<int64_t>(i) >= counts.train)
                p = static_cast<int64_t>(i) < counts.train + counts.validation ? Partition::validation
                                                                               : Partition::test;
            out.assignment[static_cast<size_t>(members[i])] = p;
        }
    }
    return out;
}

std::vector<int> SplitAssignment::indices_of(Partition p) const {
    std::vector<int> out;
    for (size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] == p) out.push_back(static_cast<int>(i));
    return out;
}

void save_split_csv(const std::string& path, const Manifest& manifest, const SplitAssignment& split) {
    if (split.assignment.size() != manifest.records.size())
        throw ArgumentError("split does not match manifest size");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "path,partition,seed\n";
    for (size_t i = 0; i < manifest.records.size(); ++i)
        out << manifest.records[i].path << "," << to_string(split.assignment[i]) << "," << split.seed << "\n";
    if (!out) throw IoError("write failure on '" + path + "'");
}

SplitAssignment load_split_csv(const std::string& path, const Manifest& manifest) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "path,partition,seed")
        throw ValidationError("split header must be 'path,partition,seed'");

    std::map<std::string, Partition> by_path;
    uint64_t seed = 0;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 3) throw ValidationError("split line " + std::to_string(line_no) + " malformed");
        Partition p;
        if (fields[1] == "train")
            p = Partition::train;
        else if (fields[1] == "validation")
            p = Partition::validation;
        else if (fields[1] == "test")
            p = Partition::test;
        else
            throw ValidationError("unknown partition '" + fields[1] + "' at line " + std::to_string(line_no));
        by_path[fields[0]] = p;
        try {
            seed = std::stoull(fields[2]);
        } catch (const std::exception&) {
            throw ValidationError("split seed '" + fields[2] + "' at line " + std::to_string(line_no) +
                                  " is not an integer");
        }
    }

    SplitAssignment out;
    out.seed = seed;
    out.assignment.resize(manifest.records.size());
    for (size_t i = 0; i < manifest.records.size(); ++i) {
        auto it = by_path.find(manifest.records[i].path);
        if (it == by_path.end())
            throw ValidationError("split file lacks entry for '" + manifest.records[i].path + "'");
        out.assignment[i] = it->second;
    }
    return out;
}

Manifest rebalance(const Manifest& manifest, int64_t cap, uint64_t seed) {
    if (cap < 1) throw ArgumentError("rebalance cap must be >= 1");
    int k = static_cast<int>(manifest.classes.size());
    std::vector<std::vector<int>> by_class(static_cast<size_t>(k));
    for (size_t i = 0; i < manifest.records.size(); ++i)
        by_class[static_cast<size_t>(manifest.records[i].class_id)].push_back(static_cast<int>(i));

    std::vector<bool> keep(manifest.records.size(), true);
    for (int c = 0; c < k; ++c) {
        std::vector<int>& members = by_class[static_cast<size_t>(c)];
        if (static_cast<int64_t>(members.size()) <= cap) continue;
        SeededRng rng(mix_seed(seed, 0x5eba1a4ceull + static_cast<uint64_t>(c)));
        for (size_t i = members.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(rng.next_u64() % i);
            std::swap(members[i - 1], members[j]);
        }
        for (size_t i = static_cast<size_t>(cap); i < members.size(); ++i)
            keep[static_cast<size_t>(members[i])] = false;
    }

    std::vector<ManifestRecord> kept;
    for (size_t i = 0; i < manifest.records.size(); ++i)
        if (keep[i]) kept.push_back(manifest.records[i]);
    return manifest_from_records(std::move(kept), manifest.classes);
}

std::vector<std::vector<int>> batch_iter(const std::vector<int>& partition_indices, int batch_size,
                                         uint64_t shuffle_seed, int64_t epoch) {
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    std::vector<int> order = partition_indices;
    SeededRng rng(mix_seed(shuffle_seed, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<int>> batches;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

}  // namespace mfnet
