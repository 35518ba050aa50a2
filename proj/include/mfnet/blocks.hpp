#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfnet/network.hpp"

namespace mfnet {

enum class ArchId { vgg16, resnet_v1, inception_v4, inception_resnet_v2 };

ArchId arch_from_string(const std::string& name);
std::string to_string(ArchId arch);

// Desk-scale substitute for the full-size presets: block topology is kept,
// channel widths and per-stage repeats shrink.
struct ArchScale {
    int input_side = 32;
    double width_multiplier = 0.125;
    int blocks_per_stage = 1;

    static ArchScale mini(int side, double width, int repeats) { return {side, width, repeats}; }
};

// Full-scale facts per architecture, metadata only; nothing here forces the
// full parameter tensors to be materialized.
struct ArchPreset {
    std::vector<int64_t> input_chw;  // declared full-scale input
    int declared_depth;
    int64_t feature_dim_full;  // extract_features width at width_multiplier 1
};

ArchPreset arch_preset(ArchId arch);

struct BuildOptions {
    bool batch_norm = true;
    double dropout_keep = 1.0;
    uint64_t seed = 0;
    double residual_branch_scale = 0.2;  // inception-resnet merge scaling
};

NetworkSpec build_network(ArchId arch, const ArchScale& scale, int n_classes,
                          const BuildOptions& opts = {});

// ---- block-level builders ----
// Each appends a subgraph under `prefix` and returns the output tap. They are
// the units build_network composes and are exposed so blocks can be tested in
// isolation.

struct Tap {
    int node = -1;
    int64_t channels = 0;
    int64_t h = 0;
    int64_t w = 0;
};

struct BlockContext {
    NetworkSpec* net;
    SeededRng* rng;
    bool batch_norm = true;
};

// conv -> [bn] -> [relu]
Tap append_conv_unit(BlockContext ctx, const std::string& prefix, Tap in, int64_t out_c, int kernel,
                     int stride, int pad, bool relu_after = true, bool linear = false);

// Chain of square convolutions used as an inception branch: {channels, kernel} pairs.
struct ConvStep {
    int64_t out_c;
    int kernel;
    int stride = 1;
};

// Bottleneck residual block: 1x1 -> 3x3 -> 1x1 branch plus identity or
// 1x1-projection shortcut, merged by addition, relu after the merge.
Tap append_residual_block(BlockContext ctx, const std::string& prefix, Tap in, int64_t inner_c,
                          int64_t out_c, int stride);

// Parallel conv branches concatenated along channels. Needs >= 2 branches.
Tap append_inception_block(BlockContext ctx, const std::string& prefix, Tap in,
                           const std::vector<std::vector<ConvStep>>& branches);

// Inception-style branch concat, 1x1 conv restoring the input channel count,
// then x + scale * branch with relu after the merge.
Tap append_inception_resnet_block(BlockContext ctx, const std::string& prefix, Tap in,
                                  const std::vector<std::vector<ConvStep>>& branches, double scale);

// Half-resolution block: one max-pool branch plus stride-2 conv branches,
// concatenated. Spatial dims must be even. Also used for the stem.
Tap append_reduction_block(BlockContext ctx, const std::string& prefix, Tap in,
                           const std::vector<std::vector<ConvStep>>& conv_branches);

int64_t scaled_channels(int64_t full, double width_multiplier);

}  // namespace mfnet
