#pragma once

#include <map>
#include <string>
#include <vector>

#include "mfnet/network.hpp"
#include "mfnet/tensor.hpp"

namespace mfnet {

// loss = mean over the batch of -log softmax(logits)[label];
// grad_logits = (softmax - onehot) / n
struct LossResult {
    double loss = 0.0;
    Tensor grad_logits;
};

LossResult cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels);

// Staircase exponential decay. decay_step == 0 means no decay.
struct LrSchedule {
    double start_lr = 1e-4;
    int64_t decay_step = 0;
    double decay_rate = 1.0;
};

double lr_at(const LrSchedule& sched, int64_t iteration);

enum class OptimizerKind { sgd, rmsprop, adam };

OptimizerKind optimizer_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::sgd;
    int64_t step = 0;
    double sgd_momentum = 0.0;  // 0 = plain SGD
    double rms_decay = 0.9;
    double rms_epsilon = 1e-10;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::map<std::string, Tensor> m1;  // momentum / first moment / E[g^2]
    std::map<std::string, Tensor> m2;  // adam second moment

    static OptimizerState make(OptimizerKind kind) {
        OptimizerState s;
        s.kind = kind;
        return s;
    }
};

// Applies one update to every parameter that has a gradient entry; frozen
// parameters never receive entries and are never touched.
void optimizer_step(std::map<std::string, Param>& params, const GradMap& grads, OptimizerState& state,
                    double lr);

// ---- gradient checking ----

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    int64_t checked_elements = 0;
};

// Central finite differences against a caller-supplied analytic gradient map.
GradCheckResult compare_gradients(NetworkSpec& net, const Tensor& x, const std::vector<int>& labels,
                                  double epsilon, const GradMap& analytic);

// Full check: computes the analytic gradients itself. Requires fp64 mode.
GradCheckResult gradient_check(NetworkSpec& net, const Tensor& x, const std::vector<int>& labels,
                               double epsilon = 1e-5);

}  // namespace mfnet
