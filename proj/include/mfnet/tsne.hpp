#pragma once

#include <cstdint>
#include <vector>

#include "mfnet/tensor.hpp"

namespace mfnet {

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    uint64_t seed = 0;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;   // momentum also switches here
    double momentum_start = 0.5;
    double momentum_final = 0.8;
};

struct EmbeddingSet {
    Tensor coords;                // [n, 2]
    std::vector<int> class_ids;   // carried through for export
    double final_kl = 0.0;
    double post_exaggeration_kl = 0.0;  // KL right after the exaggeration phase
    TsneConfig config;
};

// Exact t-SNE: per-point bandwidths found by binary search so the conditional
// entropy matches log(perplexity), symmetrized P, Student-t Q in 2-D,
// gradient descent with an early-exaggeration phase.
EmbeddingSet tsne_embed(const Tensor& features, const TsneConfig& config,
                        const std::vector<int>& class_ids = {});

}  // namespace mfnet
