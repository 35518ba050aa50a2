#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mfnet/exports.hpp"
#include "mfnet/image_io.hpp"
#include "mfnet/synthetic.hpp"
#include "mfnet/trainer.hpp"
#include "mfnet/tsne.hpp"

namespace fs = std::filesystem;
using namespace mfnet;

namespace {

int cmd_split(const std::string& manifest_path, uint64_t seed, const std::string& out, bool enforce_vocab) {
    Manifest manifest =
        enforce_vocab ? load_manifest(manifest_path, microfacies_classes()) : load_manifest(manifest_path);
    SplitAssignment split = stratified_split(manifest, seed);
    save_split_csv(out, manifest, split);
    std::printf("split: %zu records, %zu classes -> %s (train %zu / val %zu / test %zu)\n",
                manifest.records.size(), manifest.classes.size(), out.c_str(),
                split.indices_of(Partition::train).size(), split.indices_of(Partition::validation).size(),
                split.indices_of(Partition::test).size());
    return 0;
}

int cmd_train(const std::string& config_path) {
    ExperimentConfig cfg = config_from_json_file(config_path);
    Manifest manifest = load_manifest(cfg.data.manifest);
    RunResult rr = run_training(cfg, manifest);
    std::printf("run '%s': %zu epochs, best epoch %lld, max val acc %.4f\n", cfg.name.c_str(),
                rr.curve.size(), static_cast<long long>(rr.best_epoch), rr.max_val_acc);
    std::printf("best checkpoint: %s\n", rr.best_checkpoint.c_str());
    std::printf("curve log: %s\n", (fs::path(cfg.output_dir) / "curves.csv").string().c_str());
    if (rr.max_top1_test) std::printf("max top-1 test acc: %.4f\n", *rr.max_top1_test);
    if (rr.max_top3_test) std::printf("max top-3 test acc: %.4f\n", *rr.max_top3_test);
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path, const std::string& split_path,
             uint64_t split_seed, const std::string& images_root, const std::string& out_dir,
             int batch_size) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Manifest manifest = ckpt.meta.class_names.empty() ? load_manifest(manifest_path)
                                                      : load_manifest(manifest_path, ckpt.meta.class_names);
    SplitAssignment split =
        split_path.empty() ? stratified_split(manifest, split_seed) : load_split_csv(split_path, manifest);
    DataConfig data;
    data.images_root = images_root;
    fs::create_directories(out_dir);

    int k = static_cast<int>(manifest.classes.size());
    int top3 = std::min(3, k);
    for (Partition part : {Partition::validation, Partition::test}) {
        std::vector<int> idx = split.indices_of(part);
        if (idx.empty()) {
            std::printf("%s: empty partition, skipped\n", to_string(part).c_str());
            continue;
        }
        PartitionEval ev = evaluate_with_checkpoint(ckpt, manifest, idx, data, batch_size);
        ConfusionMatrix cm = confusion_matrix(ev.labels, ev.predictions, k);
        cm.class_names = manifest.classes;
        MetricsReport report = metrics_from_cm(cm);
        report.topk = topk_accuracy(ev.probs, ev.labels, {1, top3});

        std::string stem = (fs::path(out_dir) / to_string(part)).string();
        export_metrics_report(stem + "_metrics.csv", report, manifest.classes);
        export_confusion_counts_csv(stem + "_confusion_counts.csv", cm);
        export_confusion_normalized_csv(stem + "_confusion_normalized.csv", cm);
        std::printf("%s: n=%zu loss=%.4f acc=%.4f top1=%.4f top%d=%.4f -> %s_*.csv\n",
                    to_string(part).c_str(), idx.size(), ev.loss, ev.acc, report.topk[1], top3,
                    report.topk[top3], stem.c_str());
    }
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::vector<std::string>& images, int k) {
    auto preds = predict_topk(ckpt_path, images, k);
    int failures = 0;
    for (const Prediction& p : preds) {
        if (!p.ok) {
            ++failures;
            std::printf("%s: ERROR %s\n", p.path.c_str(), p.error.c_str());
            continue;
        }
        std::printf("%s:", p.path.c_str());
        for (const auto& [name, prob] : p.ranked) std::printf(" %s=%.4f", name.c_str(), prob);
        std::printf("\n");
    }
    return failures == static_cast<int>(preds.size()) && !preds.empty() ? 1 : 0;
}

int cmd_features(const std::string& ckpt_path, const std::string& manifest_path,
                 const std::string& split_path, const std::string& partition, const std::string& node,
                 const std::string& images_root, const std::string& out, int batch_size) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Manifest manifest = ckpt.meta.class_names.empty() ? load_manifest(manifest_path)
                                                      : load_manifest(manifest_path, ckpt.meta.class_names);
    SplitAssignment split = load_split_csv(split_path, manifest);
    Partition part = Partition::test;
    if (partition == "train")
        part = Partition::train;
    else if (partition == "validation")
        part = Partition::validation;
    else if (partition != "test")
        throw ArgumentError("partition must be train, validation or test");

    DataConfig data;
    data.images_root = images_root;
    FeatureTable table =
        features_with_checkpoint(ckpt, manifest, split.indices_of(part), data, node, batch_size);
    export_features_csv(out, table.features, table.class_ids, table.ids);
    std::printf("features: %lld x %lld -> %s\n", static_cast<long long>(table.features.dim(0)),
                static_cast<long long>(table.features.dim(1)), out.c_str());
    return 0;
}

int cmd_tsne(const std::string& features_path, const std::string& out, double perplexity, int iterations,
             uint64_t seed) {
    FeatureTable table = load_features_csv(features_path);
    TsneConfig cfg;
    cfg.perplexity = perplexity;
    cfg.iterations = iterations;
    cfg.seed = seed;
    EmbeddingSet embedding = tsne_embed(table.features, cfg, table.class_ids);
    export_embeddings_csv(out, embedding, table.ids);
    std::printf("tsne: %lld points, final KL %.6f (post-exaggeration %.6f) -> %s\n",
                static_cast<long long>(embedding.coords.dim(0)), embedding.final_kl,
                embedding.post_exaggeration_kl, out.c_str());
    return 0;
}

int cmd_suite(const std::vector<std::string>& config_paths, const std::string& out) {
    auto rows = run_experiment_suite_files(config_paths);
    export_suite_csv(out, rows);
    int failed = 0;
    for (const SuiteRow& r : rows)
        if (!r.ok) ++failed;
    std::printf("suite: %zu runs, %d failed -> %s\n", rows.size(), failed, out.c_str());
    return 0;
}

int cmd_gradcheck(const std::string& arch, int side, double width, int repeats, int classes, double eps,
                  uint64_t seed) {
    set_precision(Precision::fp64);
    BuildOptions opts;
    opts.seed = seed;
    NetworkSpec net =
        build_network(arch_from_string(arch), ArchScale::mini(side, width, repeats), classes, opts);
    SeededRng rng(seed + 1);
    Tensor x = seeded_random(rng, {2, 3, side, side}, Distribution::uniform_in(0, 1));
    std::vector<int> labels;
    for (int i = 0; i < 2; ++i) labels.push_back(static_cast<int>(rng.next_u64() % classes));
    GradCheckResult r = gradient_check(net, x, labels, eps);
    std::printf("%s: max relative error %.3e over %lld elements (worst: %s)\n", arch.c_str(),
                r.max_rel_error, static_cast<long long>(r.checked_elements), r.worst_param.c_str());
    return r.max_rel_error < 1e-4 ? 0 : 1;
}

int cmd_maps(const std::string& ckpt_path, const std::string& image_path, const std::string& node,
             const std::string& prefix) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    NetworkSpec net = network_from_checkpoint(ckpt);
    std::string node_name = node.empty() ? net.feature_node : node;
    int idx = net.node_index(node_name);
    if (idx < 0) throw ArgumentError("unknown node '" + node_name + "'");

    AugmentPipeline pipeline = eval_pipeline_for(ckpt.meta, arch_from_string(ckpt.arch));
    SeededRng rng(0);
    Tensor img = apply_pipeline(grayscale_to_rgb(load_image(image_path)), pipeline, rng, PipelineMode::eval);
    Tensor x({1, 3, pipeline.target_side, pipeline.target_side});
    std::copy(img.data(), img.data() + img.size(), x.data());

    ForwardTrace trace;
    net.forward(x, RunMode::infer, rng, &trace);
    const Tensor& act = trace.outputs[static_cast<size_t>(idx)];
    if (act.rank() != 4) throw ArgumentError("node '" + node_name + "' has no spatial maps");
    Tensor maps = act.reshaped({act.dim(1), act.dim(2), act.dim(3)});
    auto written = export_feature_maps(prefix, maps);
    std::printf("maps: %zu channels of '%s' -> %s_c*.pgm\n", written.size(), node_name.c_str(),
                prefix.c_str());
    return 0;
}

int cmd_synth(const std::string& out_dir, const std::vector<std::string>& classes, int per_class, int side,
              uint64_t seed) {
    ShapesDatasetSpec spec;
    spec.n_per_class = per_class;
    spec.side = side;
    spec.seed = seed;
    if (!classes.empty()) spec.classes = classes;
    std::string manifest = make_shapes_dataset(out_dir, spec);
    std::printf("synth: %zu classes x %d images (%dpx) -> %s\n", spec.classes.size(), per_class, side,
                manifest.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"thin-section image classification toolkit"};
    app.require_subcommand(1);
    app.footer("MFNET_PRECISION=fp32|fp64 selects the numeric mode (default fp32).");

    auto* split = app.add_subcommand("split", "stratified 80/15/5 split of a manifest");
    std::string split_manifest, split_out = "split.csv";
    uint64_t split_seed = 0;
    bool split_vocab = false;
    split->add_option("--manifest", split_manifest, "manifest CSV (path,label,source)")->required();
    split->add_option("--seed", split_seed, "split seed");
    split->add_option("--out", split_out, "output split CSV");
    split->add_flag("--microfacies", split_vocab, "enforce the 22-class thin-section vocabulary");

    auto* train = app.add_subcommand("train", "run one training experiment from a JSON config");
    std::string train_config;
    train->add_option("config", train_config, "experiment config JSON")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation/test partitions");
    std::string eval_ckpt, eval_manifest, eval_split, eval_root, eval_out = ".";
    uint64_t eval_seed = 0;
    int eval_batch = 32;
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--manifest", eval_manifest)->required();
    eval->add_option("--split", eval_split, "split CSV; derived from --split-seed when omitted");
    eval->add_option("--split-seed", eval_seed);
    eval->add_option("--images-root", eval_root);
    eval->add_option("--out", eval_out, "output directory");
    eval->add_option("--batch", eval_batch);

    auto* predict = app.add_subcommand("predict", "rank classes for images");
    std::string pred_ckpt;
    std::vector<std::string> pred_images;
    int pred_k = 3;
    predict->add_option("--checkpoint", pred_ckpt)->required();
    predict->add_option("-k", pred_k, "list the top k classes");
    predict->add_option("images", pred_images, "image files")->required();

    auto* features = app.add_subcommand("features", "export pooled activations of a named node");
    std::string feat_ckpt, feat_manifest, feat_split, feat_node, feat_root, feat_partition = "test";
    std::string feat_out = "features.csv";
    int feat_batch = 32;
    features->add_option("--checkpoint", feat_ckpt)->required();
    features->add_option("--manifest", feat_manifest)->required();
    features->add_option("--split", feat_split)->required();
    features->add_option("--partition", feat_partition, "train|validation|test");
    features->add_option("--node", feat_node, "node name; the build's feature node when omitted");
    features->add_option("--images-root", feat_root);
    features->add_option("--out", feat_out);
    features->add_option("--batch", feat_batch);

    auto* tsne = app.add_subcommand("tsne", "embed a feature CSV into 2-D");
    std::string tsne_features, tsne_out = "embedding.csv";
    double tsne_perplexity = 30.0;
    int tsne_iterations = 1000;
    uint64_t tsne_seed = 0;
    tsne->add_option("--features", tsne_features, "feature CSV from the features command")->required();
    tsne->add_option("--out", tsne_out);
    tsne->add_option("--perplexity", tsne_perplexity);
    tsne->add_option("--iterations", tsne_iterations);
    tsne->add_option("--seed", tsne_seed);

    auto* suite = app.add_subcommand("suite", "run a list of experiment configs sequentially");
    std::vector<std::string> suite_configs;
    std::string suite_out = "suite.csv";
    suite->add_option("configs", suite_configs, "experiment config JSON files")->required();
    suite->add_option("--out", suite_out, "results table CSV");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of a mini architecture");
    std::string gc_arch = "vgg16";
    int gc_side = 16, gc_repeats = 1, gc_classes = 4;
    double gc_width = 0.0625, gc_eps = 1e-5;
    uint64_t gc_seed = 0;
    gradcheck->add_option("--arch", gc_arch, "vgg16|resnet_v1|inception_v4|inception_resnet_v2");
    gradcheck->add_option("--side", gc_side);
    gradcheck->add_option("--width", gc_width);
    gradcheck->add_option("--repeats", gc_repeats);
    gradcheck->add_option("--classes", gc_classes);
    gradcheck->add_option("--eps", gc_eps);
    gradcheck->add_option("--seed", gc_seed);

    auto* maps = app.add_subcommand("maps", "export per-channel feature maps of a node as PGM files");
    std::string maps_ckpt, maps_image, maps_node, maps_prefix = "maps";
    maps->add_option("--checkpoint", maps_ckpt)->required();
    maps->add_option("--image", maps_image)->required();
    maps->add_option("--node", maps_node, "node name; the build's feature node when omitted");
    maps->add_option("--out-prefix", maps_prefix);

    auto* synth = app.add_subcommand("synth", "generate the separable shapes dataset");
    std::string synth_out = "shapes";
    std::vector<std::string> synth_classes;
    int synth_per_class = 200, synth_side = 32;
    uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--classes", synth_classes, "shape names (default circle,cross,square,triangle)");
    synth->add_option("--per-class", synth_per_class);
    synth->add_option("--side", synth_side);
    synth->add_option("--seed", synth_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*split) return cmd_split(split_manifest, split_seed, split_out, split_vocab);
        if (*train) return cmd_train(train_config);
        if (*eval)
            return cmd_eval(eval_ckpt, eval_manifest, eval_split, eval_seed, eval_root, eval_out, eval_batch);
        if (*predict) return cmd_predict(pred_ckpt, pred_images, pred_k);
        if (*features)
            return cmd_features(feat_ckpt, feat_manifest, feat_split, feat_partition, feat_node, feat_root,
                                feat_out, feat_batch);
        if (*tsne) return cmd_tsne(tsne_features, tsne_out, tsne_perplexity, tsne_iterations, tsne_seed);
        if (*suite) return cmd_suite(suite_configs, suite_out);
        if (*gradcheck)
            return cmd_gradcheck(gc_arch, gc_side, gc_width, gc_repeats, gc_classes, gc_eps, gc_seed);
        if (*maps) return cmd_maps(maps_ckpt, maps_image, maps_node, maps_prefix);
        if (*synth) return cmd_synth(synth_out, synth_classes, synth_per_class, synth_side, synth_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
