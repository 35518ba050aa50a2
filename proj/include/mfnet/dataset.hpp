#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfnet/tensor.hpp"

namespace mfnet {

enum class Partition { train, validation, test };

std::string to_string(Partition p);

struct ManifestRecord {
    std::string path;
    std::string label;
    std::string source;  // "literature" or "own"
    int class_id = -1;
};

struct Manifest {
    std::vector<ManifestRecord> records;
    std::vector<std::string> classes;  // sorted vocabulary

    int64_t class_count(int class_id) const;
    int class_id_of(const std::string& label) const;  // -1 when absent
};

// The 22 canonical thin-section grain classes, alphabetical.
const std::vector<std::string>& microfacies_classes();

// CSV with header `path,label,source`. When `vocabulary` is given every label
// must come from it; otherwise the vocabulary is the sorted set of labels seen.
Manifest load_manifest(const std::string& path,
                       const std::optional<std::vector<std::string>>& vocabulary = std::nullopt);
Manifest manifest_from_records(std::vector<ManifestRecord> records,
                               const std::optional<std::vector<std::string>>& vocabulary = std::nullopt);

// Per class of size n: train = ceil(0.8 n), test = floor(0.05 n),
// validation gets the remainder. Assignment is random within each class.
struct SplitCounts {
    int64_t train = 0;
    int64_t validation = 0;
    int64_t test = 0;
};

SplitCounts split_counts_for(int64_t class_size);

struct SplitAssignment {
    std::vector<Partition> assignment;  // parallel to manifest.records
    uint64_t seed = 0;

    std::vector<int> indices_of(Partition p) const;
};

SplitAssignment stratified_split(const Manifest& manifest, uint64_t seed);

void save_split_csv(const std::string& path, const Manifest& manifest, const SplitAssignment& split);
SplitAssignment load_split_csv(const std::string& path, const Manifest& manifest);

// Classes above `cap` are randomly undersampled to exactly `cap` records.
Manifest rebalance(const Manifest& manifest, int64_t cap, uint64_t seed);

// Seeded permutation of the partition per epoch, chunked into batches; the
// final short batch is emitted.
std::vector<std::vector<int>> batch_iter(const std::vector<int>& partition_indices, int batch_size,
                                         uint64_t shuffle_seed, int64_t epoch);

}  // namespace mfnet
