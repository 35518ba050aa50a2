#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfnet/blocks.hpp"
#include "mfnet/dataset.hpp"
#include "mfnet/image_io.hpp"
#include "mfnet/metrics.hpp"
#include "mfnet/optim.hpp"
#include "mfnet/synthetic.hpp"
#include "mfnet/trainer.hpp"
#include "mfnet/tsne.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace mfnet;

namespace {

using InArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const InArray& arr) {
    std::vector<int64_t> shape;
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape.push_back(arr.shape(i));
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor::from(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
    return arr;
}

// Owning wrapper so python holds networks built on the C++ side.
struct PyNetwork {
    NetworkSpec net;

    py::array_t<double> forward(const InArray& x, bool training) {
        Tensor input = tensor_from_array(x);
        SeededRng rng(0);
        return array_from_tensor(net.forward(input, training ? RunMode::train : RunMode::infer, rng));
    }
    py::array_t<double> extract_features(const InArray& x, const std::string& node) {
        Tensor input = tensor_from_array(x);
        return array_from_tensor(net.extract_features(input, node.empty() ? net.feature_node : node));
    }
};

}  // namespace

PYBIND11_MODULE(_mfnet, m) {
    m.doc() = "from-scratch CNN library for thin-section image classification";

    py::register_exception<Error>(m, "MfnetError");

    m.def("set_precision", [](const std::string& mode) {
        set_precision(mode == "fp64" ? Precision::fp64 : Precision::fp32);
    });
    m.def("active_precision", []() { return active_precision() == Precision::fp64 ? "fp64" : "fp32"; });

    // tensor primitives
    m.def(
        "matmul",
        [](const InArray& a, const InArray& b) {
            return array_from_tensor(matmul(tensor_from_array(a), tensor_from_array(b)));
        },
        "a"_a, "b"_a);
    m.def(
        "pad2d", [](const InArray& x, int pad) { return array_from_tensor(pad2d(tensor_from_array(x), pad)); },
        "x"_a, "pad"_a);
    m.def("topk_indices", &topk_indices, "values"_a, "k"_a);
    m.def(
        "softmax",
        [](const InArray& logits) { return array_from_tensor(softmax(tensor_from_array(logits))); },
        "logits"_a);
    m.def(
        "seeded_random",
        [](uint64_t seed, const std::vector<int64_t>& shape, const std::string& dist, double a, double b) {
            SeededRng rng(seed);
            Distribution d = dist == "normal" ? Distribution::normal_with(a, b) : Distribution::uniform_in(a, b);
            return array_from_tensor(seeded_random(rng, shape, d));
        },
        "seed"_a, "shape"_a, "dist"_a = "uniform", "a"_a = 0.0, "b"_a = 1.0);

    // layers
    m.def(
        "conv2d_forward",
        [](const InArray& x, const InArray& filters, const InArray& bias, int stride, int pad) {
            ConvLayer layer{tensor_from_array(filters), tensor_from_array(bias), stride, pad};
            auto [y, cache] = conv2d_forward(tensor_from_array(x), layer);
            return array_from_tensor(y);
        },
        "x"_a, "filters"_a, "bias"_a, "stride"_a = 1, "pad"_a = 0);
    m.def(
        "maxpool2d",
        [](const InArray& x) { return array_from_tensor(maxpool2d_forward(tensor_from_array(x)).first); },
        "x"_a);
    m.def(
        "cross_entropy_loss",
        [](const InArray& logits, const std::vector<int>& labels) {
            LossResult r = cross_entropy_loss(tensor_from_array(logits), labels);
            return py::make_tuple(r.loss, array_from_tensor(r.grad_logits));
        },
        "logits"_a, "labels"_a);
    m.def(
        "lr_at",
        [](double start_lr, int64_t decay_step, double decay_rate, int64_t iteration) {
            return lr_at(LrSchedule{start_lr, decay_step, decay_rate}, iteration);
        },
        "start_lr"_a, "decay_step"_a, "decay_rate"_a, "iteration"_a);

    // networks
    py::class_<PyNetwork>(m, "Network")
        .def("forward", &PyNetwork::forward, "x"_a, "training"_a = false)
        .def("extract_features", &PyNetwork::extract_features, "x"_a, "node"_a = "")
        .def_property_readonly("parameter_count", [](const PyNetwork& n) { return n.net.parameter_count(); })
        .def_property_readonly("parameter_names", [](const PyNetwork& n) { return n.net.parameter_names(); })
        .def_property_readonly("feature_dim", [](const PyNetwork& n) { return n.net.feature_dim; })
        .def_property_readonly("feature_node", [](const PyNetwork& n) { return n.net.feature_node; })
        .def_property_readonly("arch", [](const PyNetwork& n) { return n.net.arch; });

    m.def(
        "build_network",
        [](const std::string& arch, int input_side, double width_multiplier, int blocks_per_stage,
           int n_classes, uint64_t seed, bool batch_norm, double dropout_keep) {
            BuildOptions opts;
            opts.seed = seed;
            opts.batch_norm = batch_norm;
            opts.dropout_keep = dropout_keep;
            PyNetwork out;
            out.net = build_network(arch_from_string(arch),
                                    ArchScale::mini(input_side, width_multiplier, blocks_per_stage),
                                    n_classes, opts);
            return out;
        },
        "arch"_a, "input_side"_a = 32, "width_multiplier"_a = 0.125, "blocks_per_stage"_a = 1,
        "n_classes"_a = 4, "seed"_a = 0, "batch_norm"_a = true, "dropout_keep"_a = 1.0);
    m.def(
        "gradient_check",
        [](PyNetwork& network, const InArray& x, const std::vector<int>& labels, double eps) {
            GradCheckResult r = gradient_check(network.net, tensor_from_array(x), labels, eps);
            return py::make_tuple(r.max_rel_error, r.worst_param, r.checked_elements);
        },
        "network"_a, "x"_a, "labels"_a, "eps"_a = 1e-5);

    // dataset machinery
    m.def("microfacies_classes", []() { return microfacies_classes(); });
    m.def("split_counts", [](int64_t class_size) {
        SplitCounts c = split_counts_for(class_size);
        return py::make_tuple(c.train, c.validation, c.test);
    });
    m.def(
        "split_partitions",
        [](const std::vector<std::string>& labels, uint64_t seed) {
            std::vector<ManifestRecord> records;
            for (size_t i = 0; i < labels.size(); ++i)
                records.push_back({"r" + std::to_string(i), labels[i], "own", -1});
            Manifest manifest = manifest_from_records(std::move(records));
            SplitAssignment split = stratified_split(manifest, seed);
            std::vector<std::string> out;
            for (Partition p : split.assignment) out.push_back(to_string(p));
            return out;
        },
        "labels"_a, "seed"_a = 0);
    m.def("decode_image", [](py::bytes data) {
        std::string s = data;
        return array_from_tensor(decode_image(std::vector<uint8_t>(s.begin(), s.end())));
    });
    m.def("load_image", [](const std::string& path) { return array_from_tensor(load_image(path)); });
    m.def(
        "make_shapes_dataset",
        [](const std::string& dir, int n_per_class, int side, uint64_t seed,
           const std::vector<std::string>& classes) {
            ShapesDatasetSpec spec;
            spec.n_per_class = n_per_class;
            spec.side = side;
            spec.seed = seed;
            if (!classes.empty()) spec.classes = classes;
            return make_shapes_dataset(dir, spec);
        },
        "dir"_a, "n_per_class"_a = 200, "side"_a = 32, "seed"_a = 0,
        "classes"_a = std::vector<std::string>{});

    // augmentation presets
    m.def("build_preset", [](int num_aug, const std::string& family) {
        AugmentPipeline p = build_preset(num_aug, family_from_string(family));
        return py::make_tuple(p.methods, p.target_side);
    });

    // metrics
    m.def(
        "confusion_matrix",
        [](const std::vector<int>& truth, const std::vector<int>& pred, int k) {
            ConfusionMatrix cm = confusion_matrix(truth, pred, k);
            py::array_t<int64_t> arr({k, k});
            for (int t = 0; t < k; ++t)
                for (int p = 0; p < k; ++p)
                    arr.mutable_at(t, p) = cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)];
            return arr;
        },
        "truth"_a, "pred"_a, "k"_a);
    m.def("metrics_from_cm", [](const py::array_t<int64_t>& cm_array) {
        ConfusionMatrix cm;
        int64_t k = cm_array.shape(0);
        cm.counts.assign(static_cast<size_t>(k), std::vector<int64_t>(static_cast<size_t>(k), 0));
        for (int64_t t = 0; t < k; ++t)
            for (int64_t p = 0; p < k; ++p)
                cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)] = cm_array.at(t, p);
        MetricsReport r = metrics_from_cm(cm);
        auto values = [](const std::vector<MetricValue>& v) {
            py::list out;
            for (const MetricValue& mv : v) out.append(mv.defined ? py::cast(mv.value) : py::none());
            return out;
        };
        py::dict d;
        d["precision"] = values(r.precision);
        d["recall"] = values(r.recall);
        d["f1"] = values(r.f1);
        d["accuracy"] = r.accuracy;
        d["macro_precision"] = py::make_tuple(r.macro_precision.mean, r.macro_precision.stddev);
        d["macro_recall"] = py::make_tuple(r.macro_recall.mean, r.macro_recall.stddev);
        d["macro_f1"] = py::make_tuple(r.macro_f1.mean, r.macro_f1.stddev);
        return d;
    });
    m.def(
        "topk_accuracy",
        [](const InArray& probs, const std::vector<int>& labels, const std::vector<int>& ks) {
            return topk_accuracy(tensor_from_array(probs), labels, ks);
        },
        "probs"_a, "labels"_a, "ks"_a);

    // embedding
    m.def(
        "tsne",
        [](const InArray& features, double perplexity, int iterations, uint64_t seed) {
            TsneConfig cfg;
            cfg.perplexity = perplexity;
            cfg.iterations = iterations;
            cfg.seed = seed;
            EmbeddingSet e = tsne_embed(tensor_from_array(features), cfg);
            return py::make_tuple(array_from_tensor(e.coords), e.final_kl, e.post_exaggeration_kl);
        },
        "features"_a, "perplexity"_a = 30.0, "iterations"_a = 1000, "seed"_a = 0);

    // training pipeline
    m.def("run_training", [](const std::string& config_json) {
        ExperimentConfig cfg = config_from_json_text(config_json);
        Manifest manifest = load_manifest(cfg.data.manifest);
        RunResult rr = run_training(cfg, manifest);
        py::dict d;
        d["best_checkpoint"] = rr.best_checkpoint;
        d["last_checkpoint"] = rr.last_checkpoint;
        d["best_epoch"] = rr.best_epoch;
        d["epochs_ran"] = rr.curve.size();
        d["max_train_acc"] = rr.max_train_acc;
        d["min_train_loss"] = rr.min_train_loss;
        d["max_val_acc"] = rr.max_val_acc;
        d["min_val_loss"] = rr.min_val_loss;
        if (rr.max_top1_test) d["max_top1_test"] = *rr.max_top1_test;
        if (rr.max_top3_test) d["max_top3_test"] = *rr.max_top3_test;
        return d;
    });
    m.def(
        "predict",
        [](const std::string& checkpoint, const std::vector<std::string>& images, int k) {
            py::list out;
            for (const Prediction& p : predict_topk(checkpoint, images, k)) {
                py::dict d;
                d["path"] = p.path;
                d["ok"] = p.ok;
                if (!p.ok) d["error"] = p.error;
                py::list ranked;
                for (const auto& [name, prob] : p.ranked) ranked.append(py::make_tuple(name, prob));
                d["ranked"] = ranked;
                out.append(d);
            }
            return out;
        },
        "checkpoint"_a, "images"_a, "k"_a = 3);
}
