#include "mfnet/blocks.hpp"

#include <cmath>

namespace mfnet {

ArchId arch_from_string(const std::string& name) {
    if (name == "vgg16") return ArchId::vgg16;
    if (name == "resnet_v1") return ArchId::resnet_v1;
    if (name == "inception_v4") return ArchId::inception_v4;
    if (name == "inception_resnet_v2") return ArchId::inception_resnet_v2;
    throw ArgumentError("unknown architecture '" + name + "'");
}

std::string to_string(ArchId arch) {
    switch (arch) {
        case ArchId::vgg16: return "vgg16";
        case ArchId::resnet_v1: return "resnet_v1";
        case ArchId::inception_v4: return "inception_v4";
        case ArchId::inception_resnet_v2: return "inception_resnet_v2";
    }
    return "?";
}

ArchPreset arch_preset(ArchId arch) {
    switch (arch) {
        case ArchId::vgg16: return {{3, 224, 224}, 16, 512};
        case ArchId::resnet_v1: return {{3, 224, 224}, 152, 2048};
        case ArchId::inception_v4: return {{3, 299, 299}, 148, 1536};
        case ArchId::inception_resnet_v2: return {{3, 299, 299}, 164, 1536};
    }
    throw ArgumentError("unknown architecture id");
}

int64_t scaled_channels(int64_t full, double width_multiplier) {
    return std::max<int64_t>(1, std::llround(static_cast<double>(full) * width_multiplier));
}

namespace {

Tensor init_conv_filters(SeededRng& rng, int64_t out_c, int64_t in_c, int k, bool feeds_relu) {
    double fan_in = static_cast<double>(in_c) * k * k;
    double sigma = std::sqrt((feeds_relu ? 2.0 : 1.0) / fan_in);
    return seeded_random(rng, {out_c, in_c, k, k}, Distribution::normal_with(0.0, sigma));
}

Tensor init_dense_weights(SeededRng& rng, int64_t in, int64_t out, bool feeds_relu) {
    double sigma = std::sqrt((feeds_relu ? 2.0 : 1.0) / static_cast<double>(in));
    return seeded_random(rng, {in, out}, Distribution::normal_with(0.0, sigma));
}

int64_t conv_out_side(int64_t side, int kernel, int stride, int pad) {
    return (side + 2 * pad - kernel) / stride + 1;
}

}  // namespace

Tap append_conv_unit(BlockContext ctx, const std::string& prefix, Tap in, int64_t out_c, int kernel,
                     int stride, int pad, bool relu_after, bool linear) {
    NetworkSpec& net = *ctx.net;
    Tensor filters = init_conv_filters(*ctx.rng, out_c, in.channels, kernel, !linear);
    // a following batch norm would cancel the conv bias, so it is omitted then
    int node = net.add_conv(prefix, in.node, std::move(filters), Tensor({out_c}), stride, pad,
                            /*with_bias=*/!ctx.batch_norm);
    if (ctx.batch_norm) node = net.add_batchnorm(prefix + ".bn", node, out_c);
    if (relu_after) node = net.add_activation(prefix + ".act", node, Activation::relu);
    return {node, out_c, conv_out_side(in.h, kernel, stride, pad), conv_out_side(in.w, kernel, stride, pad)};
}

Tap append_residual_block(BlockContext ctx, const std::string& prefix, Tap in, int64_t inner_c,
                          int64_t out_c, int stride) {
    NetworkSpec& net = *ctx.net;
    Tap b = append_conv_unit(ctx, prefix + ".branch.conv1", in, inner_c, 1, stride, 0);
    b = append_conv_unit(ctx, prefix + ".branch.conv2", b, inner_c, 3, 1, 1);
    b = append_conv_unit(ctx, prefix + ".branch.conv3", b, out_c, 1, 1, 0, /*relu_after=*/false);

    Tap shortcut = in;
    if (stride != 1 || in.channels != out_c) {
        shortcut = append_conv_unit(ctx, prefix + ".shortcut", in, out_c, 1, stride, 0,
                                    /*relu_after=*/false);
    }
    if (shortcut.h != b.h || shortcut.w != b.w || shortcut.channels != b.channels)
        throw DimensionError("residual block '" + prefix + "': branch and shortcut shapes differ");
    int sum = net.add_add(prefix + ".add", shortcut.node, b.node);
    int out = net.add_activation(prefix + ".out", sum, Activation::relu);
    return {out, out_c, b.h, b.w};
}

namespace {

Tap append_branch(BlockContext ctx, const std::string& prefix, Tap in, const std::vector<ConvStep>& steps) {
    Tap cur = in;
    for (size_t s = 0; s < steps.size(); ++s) {
        const ConvStep& st = steps[s];
        int pad = (st.kernel - 1) / 2;
        cur = append_conv_unit(ctx, prefix + ".conv" + std::to_string(s + 1), cur, st.out_c, st.kernel,
                               st.stride, pad);
    }
    return cur;
}

}  // namespace

Tap append_inception_block(BlockContext ctx, const std::string& prefix, Tap in,
                           const std::vector<std::vector<ConvStep>>& branches) {
    if (branches.size() < 2) throw ArgumentError("inception block needs at least 2 branches");
    NetworkSpec& net = *ctx.net;
    std::vector<int> outs;
    int64_t total_c = 0;
    Tap last{};
    for (size_t b = 0; b < branches.size(); ++b) {
        Tap t = append_branch(ctx, prefix + ".b" + std::to_string(b), in, branches[b]);
        if (b > 0 && (t.h != last.h || t.w != last.w))
            throw DimensionError("inception block '" + prefix + "': branch spatial dims differ");
        outs.push_back(t.node);
        total_c += t.channels;
        last = t;
    }
    int node = net.add_concat(prefix + ".concat", outs);
    return {node, total_c, last.h, last.w};
}

Tap append_inception_resnet_block(BlockContext ctx, const std::string& prefix, Tap in,
                                  const std::vector<std::vector<ConvStep>>& branches, double scale) {
    NetworkSpec& net = *ctx.net;
    Tap mixed = append_inception_block(ctx, prefix, in, branches);
    if (mixed.h != in.h || mixed.w != in.w)
        throw DimensionError("inception-resnet block '" + prefix + "' must preserve spatial dims");
    // linear 1x1 conv restores the input channel count before the merge
    Tap restored = append_conv_unit(ctx, prefix + ".up", mixed, in.channels, 1, 1, 0,
                                    /*relu_after=*/false, /*linear=*/true);
    int sum = net.add_add(prefix + ".add", in.node, restored.node, scale);
    int out = net.add_activation(prefix + ".out", sum, Activation::relu);
    return {out, in.channels, in.h, in.w};
}

Tap append_reduction_block(BlockContext ctx, const std::string& prefix, Tap in,
                           const std::vector<std::vector<ConvStep>>& conv_branches) {
    if (in.h % 2 != 0 || in.w % 2 != 0)
        throw ArgumentError("reduction block '" + prefix + "' needs even spatial dims, got " +
                            std::to_string(in.h) + "x" + std::to_string(in.w));
    if (conv_branches.empty()) throw ArgumentError("reduction block needs at least one conv branch");
    NetworkSpec& net = *ctx.net;

    // pool branch goes first so its channel slice starts at 0
    int pool = net.add_maxpool(prefix + ".pool", in.node);
    std::vector<int> outs{pool};
    int64_t total_c = in.channels;
    int64_t out_h = (in.h + 1) / 2, out_w = (in.w + 1) / 2;

    for (size_t b = 0; b < conv_branches.size(); ++b) {
        Tap t = append_branch(ctx, prefix + ".b" + std::to_string(b), in, conv_branches[b]);
        if (t.h != out_h || t.w != out_w)
            throw DimensionError("reduction block '" + prefix + "': conv branch must halve spatial dims");
        outs.push_back(t.node);
        total_c += t.channels;
    }
    int node = net.add_concat(prefix + ".concat", outs);
    return {node, total_c, out_h, out_w};
}

namespace {

struct BuildCommon {
    NetworkSpec net;
    SeededRng rng;
    bool use_bn;
    double width;
    int repeats;
    // built on demand: BuildCommon moves around, so no stored self-pointers
    BlockContext ctx() { return BlockContext{&net, &rng, use_bn}; }
    int64_t c(int64_t full) const { return scaled_channels(full, width); }
};

BuildCommon start_build(ArchId arch, const ArchScale& scale, int n_classes, const BuildOptions& opts) {
    if (n_classes < 2) throw ArgumentError("n_classes must be >= 2");
    if (scale.input_side < 16) throw ArgumentError("input_side must be >= 16");
    if (!(scale.width_multiplier > 0.0 && scale.width_multiplier <= 1.0))
        throw ArgumentError("width_multiplier must be in (0,1]");
    if (scale.blocks_per_stage < 1) throw ArgumentError("blocks_per_stage must be >= 1");
    BuildCommon b{NetworkSpec{}, SeededRng(opts.seed), opts.batch_norm, scale.width_multiplier,
                  scale.blocks_per_stage};
    ArchPreset preset = arch_preset(arch);
    b.net.arch = to_string(arch);
    b.net.n_classes = n_classes;
    b.net.declared_depth = preset.declared_depth;
    b.net.full_input = preset.input_chw;
    return b;
}

void finish_head(BuildCommon& b, Tap features, int n_classes, const BuildOptions& opts) {
    NetworkSpec& net = b.net;
    int gap = net.add_global_avg_pool("gap", features.node);
    int drop = net.add_dropout("head.dropout", gap, opts.dropout_keep);
    Tensor w = init_dense_weights(b.rng, features.channels, n_classes, /*feeds_relu=*/false);
    int head = net.add_dense("head.fc", drop, std::move(w), Tensor({n_classes}));
    net.set_output(head);
}

NetworkSpec build_vgg16(const ArchScale& scale, int n_classes, const BuildOptions& opts) {
    BuildCommon b = start_build(ArchId::vgg16, scale, n_classes, opts);
    NetworkSpec& net = b.net;
    int input = net.add_input({3, scale.input_side, scale.input_side});
    Tap cur{input, 3, scale.input_side, scale.input_side};

    const int64_t stage_c[5] = {64, 128, 256, 512, 512};
    const int stage_convs[5] = {2, 2, 3, 3, 3};
    for (int s = 0; s < 5; ++s) {
        for (int v = 0; v < stage_convs[s]; ++v) {
            std::string name = "conv" + std::to_string(s + 1) + "." + std::to_string(v + 1);
            cur = append_conv_unit(b.ctx(), name, cur, b.c(stage_c[s]), 3, 1, 1);
        }
        int pool = net.add_maxpool("pool" + std::to_string(s + 1), cur.node);
        cur = {pool, cur.channels, (cur.h + 1) / 2, (cur.w + 1) / 2};
    }
    net.feature_node = "conv5.3.act";
    net.feature_dim = cur.channels;

    int flat = net.add_flatten("flatten", cur.node);
    int64_t flat_dim = cur.channels * cur.h * cur.w;
    int64_t fc_dim = b.c(4096);

    int fc6 = net.add_dense("fc6", flat, init_dense_weights(b.rng, flat_dim, fc_dim, true), Tensor({fc_dim}));
    int act6 = net.add_activation("fc6.act", fc6, Activation::relu);
    int drop6 = net.add_dropout("fc6.dropout", act6, opts.dropout_keep);
    int fc7 = net.add_dense("fc7", drop6, init_dense_weights(b.rng, fc_dim, fc_dim, true), Tensor({fc_dim}));
    int act7 = net.add_activation("fc7.act", fc7, Activation::relu);
    int drop7 = net.add_dropout("fc7.dropout", act7, opts.dropout_keep);
    int head = net.add_dense("head.fc", drop7, init_dense_weights(b.rng, fc_dim, n_classes, false),
                             Tensor({n_classes}));
    net.set_output(head);
    net.half_trainable_prefixes = {"conv4", "conv5", "fc6", "fc7", "head"};
    return std::move(b.net);
}

NetworkSpec build_resnet_v1(const ArchScale& scale, int n_classes, const BuildOptions& opts) {
    BuildCommon b = start_build(ArchId::resnet_v1, scale, n_classes, opts);
    NetworkSpec& net = b.net;
    int input = net.add_input({3, scale.input_side, scale.input_side});
    Tap cur{input, 3, scale.input_side, scale.input_side};

    cur = append_conv_unit(b.ctx(), "stem.conv", cur, b.c(64), 3, 1, 1);
    int pool = net.add_maxpool("stem.pool", cur.node);
    cur = {pool, cur.channels, (cur.h + 1) / 2, (cur.w + 1) / 2};

    const int64_t inner_c[4] = {64, 128, 256, 512};
    for (int s = 0; s < 4; ++s) {
        for (int r = 0; r < b.repeats; ++r) {
            int stride = (s > 0 && r == 0) ? 2 : 1;
            std::string name = "block" + std::to_string(s + 1) + "." + std::to_string(r);
            cur = append_residual_block(b.ctx(), name, cur, b.c(inner_c[s]), b.c(inner_c[s] * 4), stride);
        }
    }
    net.feature_node = "block4." + std::to_string(b.repeats - 1) + ".out";
    net.feature_dim = cur.channels;
    finish_head(b, cur, n_classes, opts);
    net.half_trainable_prefixes = {"block3", "block4", "head"};
    return std::move(b.net);
}

Tap build_inception_stem(BuildCommon& b, const ArchScale& scale) {
    NetworkSpec& net = b.net;
    int input = net.add_input({3, scale.input_side, scale.input_side});
    Tap cur{input, 3, scale.input_side, scale.input_side};
    cur = append_conv_unit(b.ctx(), "stem.conv1", cur, b.c(64), 3, 1, 1);
    // two-branch reduction: pooling branch + convolutional branch
    return append_reduction_block(b.ctx(), "stem.reduce", cur, {{{b.c(96), 3, 2}}});
}

NetworkSpec build_inception_v4(const ArchScale& scale, int n_classes, const BuildOptions& opts) {
    BuildCommon b = start_build(ArchId::inception_v4, scale, n_classes, opts);
    NetworkSpec& net = b.net;
    Tap cur = build_inception_stem(b, scale);

    auto triple = [&](int64_t c1, int64_t r2, int64_t c2, int64_t r3, int64_t c3) {
        return std::vector<std::vector<ConvStep>>{
            {{b.c(c1), 1}}, {{b.c(r2), 1}, {b.c(c2), 3}}, {{b.c(r3), 1}, {b.c(c3), 5}}};
    };

    for (int r = 0; r < b.repeats; ++r)
        cur = append_inception_block(b.ctx(), "inception_a." + std::to_string(r), cur,
                                     triple(96, 64, 96, 64, 96));
    cur = append_reduction_block(b.ctx(), "reduction_a", cur,
                                 {{{b.c(192), 3, 2}}, {{b.c(96), 1}, {b.c(224), 3, 2}}});
    for (int r = 0; r < b.repeats; ++r)
        cur = append_inception_block(b.ctx(), "inception_b." + std::to_string(r), cur,
                                     triple(192, 128, 256, 128, 192));
    cur = append_reduction_block(b.ctx(), "reduction_b", cur,
                                 {{{b.c(128), 1}, {b.c(192), 3, 2}}, {{b.c(192), 3, 2}}});
    for (int r = 0; r < b.repeats; ++r)
        cur = append_inception_block(b.ctx(), "inception_c." + std::to_string(r), cur,
                                     triple(384, 256, 768, 256, 384));

    net.feature_node = "inception_c." + std::to_string(b.repeats - 1) + ".concat";
    net.feature_dim = cur.channels;
    finish_head(b, cur, n_classes, opts);
    net.half_trainable_prefixes = {"inception_b", "reduction_b", "inception_c", "head"};
    return std::move(b.net);
}

NetworkSpec build_inception_resnet_v2(const ArchScale& scale, int n_classes, const BuildOptions& opts) {
    BuildCommon b = start_build(ArchId::inception_resnet_v2, scale, n_classes, opts);
    NetworkSpec& net = b.net;
    Tap cur = build_inception_stem(b, scale);
    double sc = opts.residual_branch_scale;

    for (int r = 0; r < b.repeats; ++r)
        cur = append_inception_resnet_block(
            b.ctx(), "inception_resnet_a." + std::to_string(r), cur,
            {{{b.c(32), 1}}, {{b.c(32), 1}, {b.c(48), 3}}, {{b.c(32), 1}, {b.c(48), 3}, {b.c(64), 3}}}, sc);
    cur = append_reduction_block(b.ctx(), "reduction_a", cur,
                                 {{{b.c(192), 3, 2}}, {{b.c(96), 1}, {b.c(224), 3, 2}}});
    for (int r = 0; r < b.repeats; ++r)
        cur = append_inception_resnet_block(b.ctx(), "inception_resnet_b." + std::to_string(r), cur,
                                            {{{b.c(96), 1}}, {{b.c(64), 1}, {b.c(128), 3}}}, sc);
    cur = append_reduction_block(b.ctx(), "reduction_b", cur,
                                 {{{b.c(128), 1}, {b.c(192), 3, 2}}, {{b.c(192), 3, 2}}});
    for (int r = 0; r < b.repeats; ++r)
        cur = append_inception_resnet_block(b.ctx(), "inception_resnet_c." + std::to_string(r), cur,
                                            {{{b.c(96), 1}}, {{b.c(96), 1}, {b.c(128), 3}}}, sc);

    // final 1x1 conv; features come from its activation
    cur = append_conv_unit(b.ctx(), "features.conv", cur, b.c(1536), 1, 1, 0);
    net.feature_node = "features.conv.act";
    net.feature_dim = cur.channels;
    finish_head(b, cur, n_classes, opts);
    net.half_trainable_prefixes = {"inception_resnet_b", "reduction_b", "inception_resnet_c", "features",
                                   "head"};
    return std::move(b.net);
}

}  // namespace

NetworkSpec build_network(ArchId arch, const ArchScale& scale, int n_classes, const BuildOptions& opts) {
    switch (arch) {
        case ArchId::vgg16: return build_vgg16(scale, n_classes, opts);
        case ArchId::resnet_v1: return build_resnet_v1(scale, n_classes, opts);
        case ArchId::inception_v4: return build_inception_v4(scale, n_classes, opts);
        case ArchId::inception_resnet_v2: return build_inception_resnet_v2(scale, n_classes, opts);
    }
    throw ArgumentError("unknown architecture id");
}

}  // namespace mfnet
