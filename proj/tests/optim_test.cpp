#include <cmath>

#include "doctest.h"
#include "mfnet/blocks.hpp"
#include "mfnet/optim.hpp"
#include "test_util.hpp"

using namespace mfnet;
using namespace mfnet::testutil;

TEST_CASE("cross entropy loss") {
    PrecisionGuard fp64(Precision::fp64);

    SUBCASE("confident correct prediction has near-zero loss") {
        Tensor logits = Tensor::from({1, 3}, {50.0, 0.0, 0.0});
        LossResult r = cross_entropy_loss(logits, {0});
        CHECK(r.loss >= 0.0);
        CHECK(r.loss < 1e-9);
    }

    SUBCASE("uniform logits over 22 classes give ln 22") {
        Tensor logits({4, 22});
        LossResult r = cross_entropy_loss(logits, {0, 5, 11, 21});
        CHECK(std::abs(r.loss - std::log(22.0)) < 1e-12);
        CHECK(std::abs(r.loss - 3.0910) < 5e-5);
    }

    SUBCASE("labels out of range are rejected") {
        Tensor logits({1, 3});
        CHECK_THROWS_AS(cross_entropy_loss(logits, {3}), ArgumentError);
        CHECK_THROWS_AS(cross_entropy_loss(logits, {-1}), ArgumentError);
    }

    SUBCASE("gradient matches finite differences") {
        SeededRng rng(3);
        Tensor logits = seeded_random(rng, {3, 5}, Distribution::uniform_in(-2, 2));
        std::vector<int> labels = {1, 4, 0};
        LossResult r = cross_entropy_loss(logits, labels);
        auto loss = [&]() { return cross_entropy_loss(logits, labels).loss; };
        CHECK(fd_check(logits, loss, r.grad_logits, 1e-6) < 1e-8);
    }
}

TEST_CASE("lr schedule") {
    LrSchedule sched{1e-4, 400, 0.96};
    CHECK(lr_at(sched, 0) == 1e-4);
    CHECK(lr_at(sched, 399) == 1e-4);
    CHECK(std::abs(lr_at(sched, 400) - 9.6e-5) < 1e-19);
    CHECK(std::abs(lr_at(sched, 800) - 9.216e-5) < 1e-19);

    SUBCASE("no decay variants") {
        CHECK(lr_at({1e-3, 0, 0.9}, 5000) == 1e-3);
        CHECK(lr_at({1e-3, 100, 1.0}, 5000) == 1e-3);
    }

    SUBCASE("negative iterations are rejected") { CHECK_THROWS_AS(lr_at(sched, -1), ArgumentError); }

    SUBCASE("non-increasing over iterations") {
        double prev = lr_at(sched, 0);
        for (int64_t i = 1; i < 3000; i += 7) {
            double cur = lr_at(sched, i);
            CHECK(cur <= prev);
            prev = cur;
        }
    }
}

namespace {

std::map<std::string, Param> single_param(double value) {
    std::map<std::string, Param> params;
    params["p"] = Param{Tensor::from({1}, {value}), true};
    return params;
}

GradMap single_grad(double g) {
    GradMap grads;
    grads["p"] = Tensor::from({1}, {g});
    return grads;
}

}  // namespace

TEST_CASE("optimizer updates") {
    PrecisionGuard fp64(Precision::fp64);

    SUBCASE("plain sgd step") {
        auto params = single_param(1.0);
        OptimizerState st = OptimizerState::make(OptimizerKind::sgd);
        optimizer_step(params, single_grad(0.5), st, 0.1);
        CHECK(std::abs(params["p"].value[0] - 0.95) < 1e-15);
        CHECK(st.step == 1);
    }

    SUBCASE("adam first step moves by about lr") {
        auto params = single_param(0.0);
        OptimizerState st = OptimizerState::make(OptimizerKind::adam);
        optimizer_step(params, single_grad(3.7), st, 0.01);
        // |m_hat| / sqrt(v_hat) == 1 at t=1 up to epsilon
        CHECK(std::abs(std::abs(params["p"].value[0]) - 0.01) < 1e-5);
    }

    SUBCASE("rmsprop first step follows the update rule") {
        auto params = single_param(2.0);
        OptimizerState st = OptimizerState::make(OptimizerKind::rmsprop);
        optimizer_step(params, single_grad(0.5), st, 0.1);
        double avg = (1.0 - st.rms_decay) * 0.25;
        double expect = 2.0 - 0.1 * 0.5 / std::sqrt(avg + st.rms_epsilon);
        CHECK(std::abs(params["p"].value[0] - expect) < 1e-15);
    }

    SUBCASE("sgd momentum accumulates velocity") {
        auto params = single_param(1.0);
        OptimizerState st = OptimizerState::make(OptimizerKind::sgd);
        st.sgd_momentum = 0.9;
        optimizer_step(params, single_grad(1.0), st, 0.1);  // v=1,   p=0.9
        optimizer_step(params, single_grad(1.0), st, 0.1);  // v=1.9, p=0.71
        CHECK(std::abs(params["p"].value[0] - 0.71) < 1e-15);
    }

    SUBCASE("zero gradient is a fixed point for every variant") {
        for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::rmsprop, OptimizerKind::adam}) {
            auto params = single_param(0.7);
            OptimizerState st = OptimizerState::make(kind);
            optimizer_step(params, single_grad(0.0), st, 0.1);
            CHECK(params["p"].value[0] == 0.7);
        }
    }

    SUBCASE("gradient for a frozen or unknown parameter is a state error") {
        auto params = single_param(1.0);
        params["p"].trainable = false;
        OptimizerState st = OptimizerState::make(OptimizerKind::sgd);
        CHECK_THROWS_AS(optimizer_step(params, single_grad(1.0), st, 0.1), StateError);
        GradMap other;
        other["q"] = Tensor::from({1}, {1.0});
        CHECK_THROWS_AS(optimizer_step(params, other, st, 0.1), StateError);
    }

    SUBCASE("all three optimizers descend a convex quadratic") {
        // f(p) = (p - 3)^2 summed over 4 coordinates
        for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::rmsprop, OptimizerKind::adam}) {
            std::map<std::string, Param> params;
            params["p"] = Param{Tensor({4}), true};
            OptimizerState st = OptimizerState::make(kind);
            auto loss_of = [&]() {
                double s = 0.0;
                for (int64_t i = 0; i < 4; ++i) {
                    double d = params["p"].value[i] - 3.0;
                    s += d * d;
                }
                return s;
            };
            double initial = loss_of();
            double lr = kind == OptimizerKind::sgd ? 1e-2 : 1e-2;
            for (int step = 0; step < 100; ++step) {
                GradMap grads;
                Tensor g({4});
                for (int64_t i = 0; i < 4; ++i) g[i] = 2.0 * (params["p"].value[i] - 3.0);
                grads["p"] = std::move(g);
                optimizer_step(params, grads, st, lr);
            }
            CHECK(loss_of() < initial);
        }
    }
}

TEST_CASE("gradient_check demands fp64 and flags corrupted gradients") {
    BuildOptions opts;
    opts.seed = 4;
    NetworkSpec net = build_network(ArchId::vgg16, ArchScale::mini(16, 0.03125, 1), 2, opts);
    SeededRng rng(1);
    Tensor x = seeded_random(rng, {2, 3, 16, 16}, Distribution::uniform_in(0, 1));
    std::vector<int> labels = {0, 1};

    {
        PrecisionGuard fp32(Precision::fp32);
        CHECK_THROWS_AS(gradient_check(net, x, labels, 1e-5), PreconditionError);
    }

    PrecisionGuard fp64(Precision::fp64);

    SUBCASE("two-layer dense net passes below 1e-6") {
        NetworkSpec dense;
        SeededRng wrng(2);
        int in = dense.add_input({1, 4, 4});
        int flat = dense.add_flatten("flatten", in);
        int fc1 = dense.add_dense("fc1", flat, seeded_random(wrng, {16, 8}, Distribution::uniform_in(-0.5, 0.5)),
                                  Tensor({8}));
        int act = dense.add_activation("fc1.act", fc1, Activation::tanh);
        int fc2 = dense.add_dense("head.fc", act,
                                  seeded_random(wrng, {8, 3}, Distribution::uniform_in(-0.5, 0.5)),
                                  Tensor({3}));
        dense.set_output(fc2);
        dense.n_classes = 3;
        Tensor xd = seeded_random(wrng, {2, 1, 4, 4}, Distribution::uniform_in(0, 1));
        GradCheckResult r = gradient_check(dense, xd, {0, 2}, 1e-5);
        CHECK(r.max_rel_error < 1e-6);
    }

    SUBCASE("mini conv net with batchnorm passes below 1e-5") {
        NetworkSpec cnn;
        SeededRng wrng(6);
        int in = cnn.add_input({2, 8, 8});
        int c1 = cnn.add_conv("c1", in, seeded_random(wrng, {4, 2, 3, 3}, Distribution::uniform_in(-0.5, 0.5)),
                              Tensor({4}), 1, 1);
        int b1 = cnn.add_batchnorm("c1.bn", c1, 4);
        int a1 = cnn.add_activation("c1.act", b1, Activation::relu);
        int p1 = cnn.add_maxpool("pool1", a1);
        int c2 = cnn.add_conv("c2", p1, seeded_random(wrng, {6, 4, 3, 3}, Distribution::uniform_in(-0.5, 0.5)),
                              Tensor({6}), 1, 1);
        int b2 = cnn.add_batchnorm("c2.bn", c2, 6);
        int a2 = cnn.add_activation("c2.act", b2, Activation::relu);
        int gap = cnn.add_global_avg_pool("gap", a2);
        int head = cnn.add_dense("head.fc", gap,
                                 seeded_random(wrng, {6, 3}, Distribution::uniform_in(-0.5, 0.5)),
                                 Tensor({3}));
        cnn.set_output(head);
        cnn.n_classes = 3;

        Tensor xc = seeded_random(wrng, {4, 2, 8, 8}, Distribution::uniform_in(0, 1));
        GradCheckResult r = gradient_check(cnn, xc, {0, 1, 2, 1}, 1e-5);
        CHECK(r.max_rel_error < 1e-5);
        CHECK(!r.worst_param.empty());
    }

    SUBCASE("a full mini architecture stays below 1e-4") {
        GradCheckResult r = gradient_check(net, x, labels, 1e-5);
        CHECK(r.max_rel_error < 1e-4);
    }

    SUBCASE("a corrupted analytic gradient is detected") {
        SeededRng frng(0);
        ForwardTrace trace;
        Tensor logits = net.forward(x, RunMode::train, frng, &trace, true);
        LossResult loss = cross_entropy_loss(logits, labels);
        GradMap analytic = net.backward(trace, loss.grad_logits);
        analytic.begin()->second[0] += 0.05;  // break one element
        GradCheckResult r = compare_gradients(net, x, labels, 1e-5, analytic);
        CHECK(r.max_rel_error > 1e-2);
    }
}
