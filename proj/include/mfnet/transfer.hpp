#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfnet/blocks.hpp"
#include "mfnet/network.hpp"
#include "mfnet/optim.hpp"

namespace mfnet {

// Everything needed to rebuild and run the network later.
struct CheckpointMeta {
    int64_t epoch = 0;
    int n_classes = 0;
    ArchScale scale;
    bool batch_norm = true;
    double dropout_keep = 1.0;
    std::vector<std::string> class_names;
    std::array<double, 3> channel_mean = {0.0, 0.0, 0.0};
    std::string metrics_json = "{}";  // free-form snapshot
};

struct Checkpoint {
    uint32_t version = 1;
    std::string arch;
    std::map<std::string, Tensor> tensors;
    std::map<std::string, bool> trainable;  // recorded for audit, not enforced on load
    std::optional<OptimizerState> optimizer;
    CheckpointMeta meta;
};

// Binary container: magic MFNC, u32 version, architecture string, metadata
// blob, tensor table (name, dtype code, rank, u64 dims, little-endian
// payload), optional optimizer state. fp32 mode stores f32 payloads, which is
// lossless because fp32 mode quantizes every tensor it produces.
void save_checkpoint(const NetworkSpec& net, const OptimizerState* optimizer, const CheckpointMeta& meta,
                     const std::string& path);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Rebuild the architecture recorded in the checkpoint and restore every tensor.
NetworkSpec network_from_checkpoint(const Checkpoint& ckpt, const BuildOptions& extra = {});

struct LoadReport {
    std::vector<std::string> loaded;
    std::vector<std::string> skipped;        // present in checkpoint only
    std::vector<std::string> reinitialized;  // net parameters left at fresh init
};

// Copies name+shape matches into `net`. Mismatching classifier-head tensors
// (prefix "head.") keep their fresh initialization; in strict mode any
// non-head mismatch is an error.
LoadReport load_pretrained(NetworkSpec& net, const Checkpoint& ckpt, bool strict);

// ---- freeze policies ----

enum class FreezeVariant { all_layers, half_layers, last_layer, none_frozen };

FreezeVariant freeze_variant_from_string(const std::string& name);
std::string to_string(FreezeVariant v);

struct FreezePolicy {
    FreezeVariant variant = FreezeVariant::none_frozen;
    std::vector<std::string> freeze_prefixes;  // explicit extra freezes
};

// Batch-norm running statistics are buffers, never trainable.
bool is_statistic_param(const std::string& name);

// Returns the number of parameter tensors left frozen.
int64_t apply_freeze_policy(NetworkSpec& net, const FreezePolicy& policy);

std::vector<std::string> frozen_parameter_names(const NetworkSpec& net);

}  // namespace mfnet
