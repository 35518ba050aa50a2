#include "mfnet/optim.hpp"

#include <algorithm>
#include <cmath>

namespace mfnet {

LossResult cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw DimensionError("cross_entropy_loss expects [n,k] logits, got " + shape_to_string(logits.shape()));
    int64_t n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != n)
        throw DimensionError("label count " + std::to_string(labels.size()) + " does not match batch " +
                             std::to_string(n));
    for (int label : labels)
        if (label < 0 || label >= k)
            throw ArgumentError("label " + std::to_string(label) + " out of range [0," + std::to_string(k) +
                                ")");

    LossResult r;
    r.grad_logits = Tensor(logits.shape());
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        double m = row[0];
        for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) sum += std::exp(row[j] - m);
        double log_sum = m + std::log(sum);
        total += log_sum - row[labels[static_cast<size_t>(i)]];
        double* g = r.grad_logits.data() + i * k;
        for (int64_t j = 0; j < k; ++j) g[j] = std::exp(row[j] - log_sum) / static_cast<double>(n);
        g[labels[static_cast<size_t>(i)]] -= 1.0 / static_cast<double>(n);
    }
    r.loss = apply_precision(total / static_cast<double>(n));
    apply_precision(r.grad_logits);
    return r;
}

double lr_at(const LrSchedule& sched, int64_t iteration) {
    if (iteration < 0) throw ArgumentError("iteration must be >= 0");
    if (sched.decay_step <= 0 || sched.decay_rate >= 1.0) return sched.start_lr;
    return sched.start_lr * std::pow(sched.decay_rate, static_cast<double>(iteration / sched.decay_step));
}

OptimizerKind optimizer_from_string(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "rmsprop" || name == "rmsp") return OptimizerKind::rmsprop;
    if (name == "adam") return OptimizerKind::adam;
    throw ArgumentError("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::rmsprop: return "rmsprop";
        case OptimizerKind::adam: return "adam";
    }
    return "?";
}

void optimizer_step(std::map<std::string, Param>& params, const GradMap& grads, OptimizerState& state,
                    double lr) {
    if (!(lr > 0.0)) throw ArgumentError("learning rate must be > 0");
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw StateError("gradient for unknown parameter '" + name + "'");
        if (!it->second.trainable) throw StateError("gradient supplied for frozen parameter '" + name + "'");
        if (!it->second.value.same_shape(g))
            throw StateError("gradient shape mismatch for parameter '" + name + "'");
    }

    state.step += 1;
    for (const auto& [name, g] : grads) {
        Tensor& p = params.at(name).value;
        switch (state.kind) {
            case OptimizerKind::sgd: {
                if (state.sgd_momentum == 0.0) {
                    for (int64_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
                } else {
                    auto [mit, _] = state.m1.try_emplace(name, Tensor(p.shape()));
                    Tensor& v = mit->second;
                    for (int64_t i = 0; i < p.size(); ++i) {
                        v[i] = state.sgd_momentum * v[i] + g[i];
                        p[i] -= lr * v[i];
                    }
                    apply_precision(v);
                }
                break;
            }
            case OptimizerKind::rmsprop: {
                auto [mit, _] = state.m1.try_emplace(name, Tensor(p.shape()));
                Tensor& avg = mit->second;
                for (int64_t i = 0; i < p.size(); ++i) {
                    avg[i] = state.rms_decay * avg[i] + (1.0 - state.rms_decay) * g[i] * g[i];
                    p[i] -= lr * g[i] / std::sqrt(avg[i] + state.rms_epsilon);
                }
                apply_precision(avg);
                break;
            }
            case OptimizerKind::adam: {
                auto [m1it, a] = state.m1.try_emplace(name, Tensor(p.shape()));
                auto [m2it, b] = state.m2.try_emplace(name, Tensor(p.shape()));
                Tensor& m = m1it->second;
                Tensor& v = m2it->second;
                double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
                double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
                for (int64_t i = 0; i < p.size(); ++i) {
                    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
                    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
                    double m_hat = m[i] / bc1;
                    double v_hat = v[i] / bc2;
                    p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.adam_epsilon);
                }
                apply_precision(m);
                apply_precision(v);
                break;
            }
        }
        apply_precision(p);
    }
}

namespace {

double loss_only(NetworkSpec& net, const Tensor& x, const std::vector<int>& labels) {
    SeededRng rng(0);
    Tensor logits = net.forward(x, RunMode::train, rng, nullptr, /*deterministic=*/true);
    return cross_entropy_loss(logits, labels).loss;
}

}  // namespace

GradCheckResult compare_gradients(NetworkSpec& net, const Tensor& x, const std::vector<int>& labels,
                                  double epsilon, const GradMap& analytic) {
    if (active_precision() != Precision::fp64)
        throw PreconditionError("gradient check requires fp64 mode (set MFNET_PRECISION=fp64)");
    if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be > 0");

    GradCheckResult result;
    for (const auto& [name, grad] : analytic) {
        Tensor& value = net.param(name).value;
        for (int64_t i = 0; i < value.size(); ++i) {
            double saved = value[i];
            double a = grad[i];
            // Adaptive step: a relu/pool kink inside the difference interval
            // ruins one step size but not a smaller one, while a wrong
            // analytic gradient disagrees at every step. Keep the best match.
            double rel = 1.0;
            for (double eps = epsilon; eps >= epsilon * 1e-3; eps /= 10.0) {
                value[i] = saved + eps;
                double lp = loss_only(net, x, labels);
                value[i] = saved - eps;
                double lm = loss_only(net, x, labels);
                value[i] = saved;

                double numeric = (lp - lm) / (2.0 * eps);
                // gradients below the finite-difference noise floor compare
                // in absolute terms
                double denom = std::max(std::abs(a) + std::abs(numeric), 1e-5);
                rel = std::min(rel, std::abs(a - numeric) / denom);
                if (rel < 1e-7) break;
            }
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = name + "[" + std::to_string(i) + "]";
            }
            ++result.checked_elements;
        }
    }
    return result;
}

GradCheckResult gradient_check(NetworkSpec& net, const Tensor& x, const std::vector<int>& labels,
                               double epsilon) {
    if (active_precision() != Precision::fp64)
        throw PreconditionError("gradient check requires fp64 mode (set MFNET_PRECISION=fp64)");
    SeededRng rng(0);
    ForwardTrace trace;
    Tensor logits = net.forward(x, RunMode::train, rng, &trace, /*deterministic=*/true);
    LossResult loss = cross_entropy_loss(logits, labels);
    GradMap analytic = net.backward(trace, loss.grad_logits);
    return compare_gradients(net, x, labels, epsilon, analytic);
}

}  // namespace mfnet
