#include "mfnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"
#include "mfnet/image_io.hpp"

namespace mfnet {

namespace fs = std::filesystem;

EarlyStopDecision early_stop_check(const std::vector<double>& history, int patience, double min_delta) {
    if (patience < 1) throw ArgumentError("early stop patience must be >= 1");
    if (min_delta < 0.0) throw ArgumentError("early stop min_delta must be >= 0");
    EarlyStopDecision d;
    if (history.empty()) return d;
    double best = history[0];
    d.best_epoch = 0;
    int wait = 0;
    for (size_t i = 1; i < history.size(); ++i) {
        if (history[i] > best + min_delta) {
            best = history[i];
            d.best_epoch = static_cast<int64_t>(i);
            wait = 0;
        } else {
            ++wait;
            if (wait >= patience) {
                d.stop = true;
                return d;
            }
        }
    }
    return d;
}

namespace {

// rng stream tags, mixed with the experiment seed
constexpr uint64_t kAugStream = 0xa16;
constexpr uint64_t kDropStream = 0xd70;

std::string resolve_path(const DataConfig& data, const std::string& rel) {
    if (data.images_root.empty()) return rel;
    return (fs::path(data.images_root) / rel).string();
}

// Decoded images (already 3-channel) and eval-mode transforms, cached: the
// eval pipeline is deterministic so its output never changes within a run.
class ImageStore {
  public:
    ImageStore(const Manifest& manifest, const DataConfig& data) : manifest_(manifest), data_(data) {}

    const Tensor& raw(int idx) {
        auto it = raw_.find(idx);
        if (it != raw_.end()) return it->second;
        Tensor img = grayscale_to_rgb(load_image(resolve_path(data_, manifest_.records[static_cast<size_t>(idx)].path)));
        return raw_.emplace(idx, std::move(img)).first->second;
    }

    const Tensor& eval_transformed(int idx, const AugmentPipeline& pipeline) {
        auto it = eval_.find(idx);
        if (it != eval_.end()) return it->second;
        SeededRng rng(0);
        Tensor img = apply_pipeline(raw(idx), pipeline, rng, PipelineMode::eval);
        return eval_.emplace(idx, std::move(img)).first->second;
    }

  private:
    const Manifest& manifest_;
    const DataConfig& data_;
    std::map<int, Tensor> raw_;
    std::map<int, Tensor> eval_;
};

std::array<double, 3> dataset_channel_mean(ImageStore& store, const std::vector<int>& indices) {
    std::array<double, 3> sum = {0.0, 0.0, 0.0};
    int64_t pixels = 0;
    for (int idx : indices) {
        const Tensor& img = store.raw(idx);
        int64_t plane = img.dim(1) * img.dim(2);
        for (int c = 0; c < 3; ++c) {
            const double* p = img.data() + c * plane;
            for (int64_t i = 0; i < plane; ++i) sum[static_cast<size_t>(c)] += p[i];
        }
        pixels += plane;
    }
    std::array<double, 3> mean = {0.0, 0.0, 0.0};
    if (pixels > 0)
        for (int c = 0; c < 3; ++c)
            mean[static_cast<size_t>(c)] = apply_precision(sum[static_cast<size_t>(c)] / static_cast<double>(pixels));
    return mean;
}

Tensor assemble_train_batch(ImageStore& store, const Manifest& manifest, const std::vector<int>& records,
                            const AugmentPipeline& pipeline, uint64_t seed, int64_t epoch,
                            std::vector<int>& labels) {
    int64_t n = static_cast<int64_t>(records.size());
    int64_t side = pipeline.target_side;
    Tensor x({n, 3, side, side});
    labels.clear();
    for (int64_t i = 0; i < n; ++i) {
        int idx = records[static_cast<size_t>(i)];
        SeededRng rng(mix_seed(mix_seed(mix_seed(seed, kAugStream), static_cast<uint64_t>(epoch)),
                               static_cast<uint64_t>(idx)));
        Tensor img = apply_pipeline(store.raw(idx), pipeline, rng, PipelineMode::train);
        std::copy(img.data(), img.data() + img.size(), x.data() + i * img.size());
        labels.push_back(manifest.records[static_cast<size_t>(idx)].class_id);
    }
    return x;
}

double batch_accuracy(const Tensor& logits, const std::vector<int>& labels) {
    int64_t n = logits.dim(0), k = logits.dim(1);
    int64_t hits = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        int64_t arg = 0;
        for (int64_t j = 1; j < k; ++j)
            if (row[j] > row[arg]) arg = j;
        if (arg == labels[static_cast<size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

struct EvalResult {
    double loss = 0.0;
    double acc = 0.0;
    Tensor probs;  // [n, k]
    std::vector<int> labels;
    std::vector<int> pred;
};

EvalResult evaluate_partition(NetworkSpec& net, ImageStore& store, const Manifest& manifest,
                              const std::vector<int>& indices, const AugmentPipeline& pipeline,
                              int batch_size) {
    EvalResult r;
    int64_t n = static_cast<int64_t>(indices.size());
    if (n == 0) return r;
    int64_t k = net.n_classes;
    r.probs = Tensor({n, k});
    double loss_sum = 0.0;
    int64_t hits = 0;
    SeededRng rng(0);

    for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(indices.size(), start + static_cast<size_t>(batch_size));
        int64_t bn = static_cast<int64_t>(end - start);
        int64_t side = pipeline.target_side;
        Tensor x({bn, 3, side, side});
        std::vector<int> labels;
        for (size_t i = start; i < end; ++i) {
            int idx = indices[i];
            const Tensor& img = store.eval_transformed(idx, pipeline);
            std::copy(img.data(), img.data() + img.size(),
                      x.data() + static_cast<int64_t>(i - start) * img.size());
            labels.push_back(manifest.records[static_cast<size_t>(idx)].class_id);
        }
        Tensor logits = net.forward(x, RunMode::infer, rng);
        LossResult loss = cross_entropy_loss(logits, labels);
        loss_sum += loss.loss * static_cast<double>(bn);
        Tensor p = softmax(logits);
        for (int64_t i = 0; i < bn; ++i) {
            const double* row = p.data() + i * k;
            std::copy(row, row + k, r.probs.data() + (static_cast<int64_t>(start) + i) * k);
            int64_t arg = 0;
            for (int64_t j = 1; j < k; ++j)
                if (row[j] > row[arg]) arg = j;
            r.pred.push_back(static_cast<int>(arg));
            if (arg == labels[static_cast<size_t>(i)]) ++hits;
        }
        r.labels.insert(r.labels.end(), labels.begin(), labels.end());
    }
    r.loss = loss_sum / static_cast<double>(n);
    r.acc = static_cast<double>(hits) / static_cast<double>(n);
    return r;
}

void restore_into(NetworkSpec& net, const Checkpoint& ckpt) {
    for (auto& [name, p] : net.params()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw FormatError("checkpoint lacks tensor '" + name + "' required for restore");
        if (it->second.shape() != p.value.shape())
            throw FormatError("checkpoint tensor '" + name + "' shape mismatch");
        p.value = it->second;
    }
}

std::string metrics_snapshot_json(double val_acc, double val_loss) {
    nlohmann::json j{{"val_acc", val_acc}, {"val_loss", val_loss}};
    return j.dump();
}

}  // namespace

AugmentPipeline eval_pipeline_for(const CheckpointMeta& meta, ArchId arch) {
    AugmentPipeline p = build_preset(arch_family(arch) == ArchFamily::vgg_resnet ? 3 : 4, arch_family(arch),
                                     meta.scale.input_side);
    p.params.channel_mean = meta.channel_mean;
    return p;
}

RunResult run_training(const ExperimentConfig& cfg, const Manifest& manifest_in) {
    validate_config(cfg);
    fs::create_directories(cfg.output_dir);

    Manifest manifest = cfg.data.rebalance_cap > 0 ? rebalance(manifest_in, cfg.data.rebalance_cap, cfg.seed)
                                                   : manifest_in;
    SplitAssignment split = cfg.data.split.empty() ? stratified_split(manifest, cfg.data.split_seed)
                                                   : load_split_csv(cfg.data.split, manifest);
    std::vector<int> train_idx = split.indices_of(Partition::train);
    std::vector<int> val_idx = split.indices_of(Partition::validation);
    std::vector<int> test_idx = split.indices_of(Partition::test);
    int k = static_cast<int>(manifest.classes.size());
    if (k < 2) throw ValidationError("training needs at least 2 classes");
    if (train_idx.empty()) throw ValidationError("training partition is empty");

    ImageStore store(manifest, cfg.data);
    AugmentPipeline pipeline =
        build_preset(cfg.num_aug, arch_family(cfg.network), cfg.scale.input_side);
    pipeline.params.channel_mean = dataset_channel_mean(store, train_idx);

    BuildOptions opts;
    opts.batch_norm = cfg.batch_norm;
    opts.dropout_keep = cfg.dropout_keep;
    opts.seed = cfg.seed;
    NetworkSpec net = build_network(cfg.network, cfg.scale, k, opts);
    OptimizerState optst = OptimizerState::make(cfg.optimizer);

    int start_epoch = 1;
    if (!cfg.resume_from.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume_from);
        restore_into(net, ck);
        if (ck.optimizer) optst = *ck.optimizer;
        start_epoch = static_cast<int>(ck.meta.epoch) + 1;
        pipeline.params.channel_mean = ck.meta.channel_mean;
    } else if (cfg.load_weights) {
        Checkpoint ck = load_checkpoint(cfg.weights_path);
        load_pretrained(net, ck, /*strict=*/false);
    }
    apply_freeze_policy(net, cfg.freeze);

    CheckpointMeta meta;
    meta.n_classes = k;
    meta.scale = cfg.scale;
    meta.batch_norm = cfg.batch_norm;
    meta.dropout_keep = cfg.dropout_keep;
    meta.class_names = manifest.classes;
    meta.channel_mean = pipeline.params.channel_mean;

    LrSchedule sched = cfg.lr_schedule();
    std::string best_path = (fs::path(cfg.output_dir) / "best.ckpt").string();
    std::string last_path = (fs::path(cfg.output_dir) / "last.ckpt").string();

    RunResult rr;
    std::vector<double> val_history;
    double best_val = -1.0;
    int64_t global_iter = optst.step;
    int top3_k = std::min(3, k);
    int last_epoch_run = start_epoch - 1;

    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        auto batches = batch_iter(train_idx, cfg.batch_size, cfg.seed, epoch);
        double last_loss = 0.0, last_acc = 0.0, loss_sum = 0.0, acc_sum = 0.0;
        int64_t samples = 0;
        for (const auto& batch : batches) {
            std::vector<int> labels;
            Tensor x = assemble_train_batch(store, manifest, batch, pipeline, cfg.seed, epoch, labels);
            SeededRng drop_rng(mix_seed(mix_seed(cfg.seed, kDropStream), static_cast<uint64_t>(global_iter)));
            ForwardTrace trace;
            Tensor logits = net.forward(x, RunMode::train, drop_rng, &trace);
            LossResult loss = cross_entropy_loss(logits, labels);
            if (!std::isfinite(loss.loss))
                throw StateError("non-finite loss at iteration " + std::to_string(global_iter) + " (epoch " +
                                 std::to_string(epoch) + ")");
            GradMap grads = net.backward(trace, loss.grad_logits);
            if (!grads.empty()) optimizer_step(net.params(), grads, optst, lr_at(sched, global_iter));
            ++global_iter;

            last_loss = loss.loss;
            last_acc = batch_accuracy(logits, labels);
            loss_sum += loss.loss * static_cast<double>(batch.size());
            acc_sum += last_acc * static_cast<double>(batch.size());
            samples += static_cast<int64_t>(batch.size());
        }

        EvalResult val = evaluate_partition(net, store, manifest, val_idx, pipeline, cfg.batch_size);

        CurveRow row;
        row.epoch = epoch;
        row.train_loss = last_loss;  // single-batch sample
        row.train_acc = last_acc;
        row.val_loss = val.loss;
        row.val_acc = val.acc;
        row.train_loss_avg = loss_sum / static_cast<double>(samples);
        row.train_acc_avg = acc_sum / static_cast<double>(samples);
        if (epoch % cfg.test_cadence == 0 && !test_idx.empty()) {
            EvalResult test = evaluate_partition(net, store, manifest, test_idx, pipeline, cfg.batch_size);
            auto topk = topk_accuracy(test.probs, test.labels, {1, top3_k});
            row.test_top1 = topk[1];
            row.test_top3 = topk[top3_k];
        }
        rr.curve.push_back(row);
        last_epoch_run = epoch;

        if (val.acc > best_val || rr.best_epoch == 0) {
            best_val = val.acc;
            rr.best_epoch = epoch;
            meta.epoch = epoch;
            meta.metrics_json = metrics_snapshot_json(val.acc, val.loss);
            save_checkpoint(net, &optst, meta, best_path);
        }
        val_history.push_back(val.acc);
        if (cfg.early_stop.patience > 0 &&
            early_stop_check(val_history, cfg.early_stop.patience, cfg.early_stop.min_delta).stop)
            break;
    }

    meta.epoch = last_epoch_run;
    save_checkpoint(net, &optst, meta, last_path);
    rr.best_checkpoint = best_path;
    rr.last_checkpoint = last_path;

    rr.max_train_acc = rr.curve.front().train_acc;
    rr.min_train_loss = rr.curve.front().train_loss;
    rr.max_val_acc = rr.curve.front().val_acc;
    rr.min_val_loss = rr.curve.front().val_loss;
    for (const CurveRow& r : rr.curve) {
        rr.max_train_acc = std::max(rr.max_train_acc, r.train_acc);
        rr.min_train_loss = std::min(rr.min_train_loss, r.train_loss);
        rr.max_val_acc = std::max(rr.max_val_acc, r.val_acc);
        rr.min_val_loss = std::min(rr.min_val_loss, r.val_loss);
        if (r.test_top1) rr.max_top1_test = std::max(rr.max_top1_test.value_or(0.0), *r.test_top1);
        if (r.test_top3) rr.max_top3_test = std::max(rr.max_top3_test.value_or(0.0), *r.test_top3);
    }

    // final report at the best checkpoint, validation and test pooled
    restore_into(net, load_checkpoint(best_path));
    std::vector<int> pooled = val_idx;
    pooled.insert(pooled.end(), test_idx.begin(), test_idx.end());
    if (!pooled.empty()) {
        EvalResult final_eval = evaluate_partition(net, store, manifest, pooled, pipeline, cfg.batch_size);
        ConfusionMatrix cm = confusion_matrix(final_eval.labels, final_eval.pred, k);
        cm.class_names = manifest.classes;
        rr.final_metrics = metrics_from_cm(cm);
        rr.final_metrics.topk = topk_accuracy(final_eval.probs, final_eval.labels, {1, top3_k});
        export_confusion_counts_csv((fs::path(cfg.output_dir) / "confusion_counts.csv").string(), cm);
        export_confusion_normalized_csv((fs::path(cfg.output_dir) / "confusion_normalized.csv").string(), cm);
        export_metrics_report((fs::path(cfg.output_dir) / "metrics.csv").string(), rr.final_metrics,
                              manifest.classes);
    }
    export_curves_csv((fs::path(cfg.output_dir) / "curves.csv").string(), rr.curve);
    return rr;
}

PartitionEval evaluate_with_checkpoint(const Checkpoint& ckpt, const Manifest& manifest,
                                       const std::vector<int>& indices, const DataConfig& data,
                                       int batch_size) {
    NetworkSpec net = network_from_checkpoint(ckpt);
    AugmentPipeline pipeline = eval_pipeline_for(ckpt.meta, arch_from_string(ckpt.arch));
    ImageStore store(manifest, data);
    EvalResult r = evaluate_partition(net, store, manifest, indices, pipeline, batch_size);
    return {r.loss, r.acc, std::move(r.probs), std::move(r.labels), std::move(r.pred)};
}

FeatureTable features_with_checkpoint(const Checkpoint& ckpt, const Manifest& manifest,
                                      const std::vector<int>& indices, const DataConfig& data,
                                      const std::string& node, int batch_size) {
    NetworkSpec net = network_from_checkpoint(ckpt);
    std::string node_name = node.empty() ? net.feature_node : node;
    AugmentPipeline pipeline = eval_pipeline_for(ckpt.meta, arch_from_string(ckpt.arch));
    ImageStore store(manifest, data);

    FeatureTable table;
    std::vector<double> rows;
    int64_t dim = -1;
    for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(indices.size(), start + static_cast<size_t>(batch_size));
        int64_t bn = static_cast<int64_t>(end - start);
        int64_t side = pipeline.target_side;
        Tensor x({bn, 3, side, side});
        for (size_t i = start; i < end; ++i) {
            const Tensor& img = store.eval_transformed(indices[i], pipeline);
            std::copy(img.data(), img.data() + img.size(),
                      x.data() + static_cast<int64_t>(i - start) * img.size());
            table.ids.push_back(manifest.records[static_cast<size_t>(indices[i])].path);
            table.class_ids.push_back(manifest.records[static_cast<size_t>(indices[i])].class_id);
        }
        Tensor f = net.extract_features(x, node_name);
        if (dim < 0) dim = f.dim(1);
        rows.insert(rows.end(), f.data(), f.data() + f.size());
    }
    if (indices.empty()) throw ArgumentError("feature extraction needs at least one record");
    table.features = Tensor::from({static_cast<int64_t>(indices.size()), dim}, std::move(rows));
    return table;
}

std::vector<Prediction> predict_topk(const std::string& checkpoint_path,
                                     const std::vector<std::string>& image_paths, int k) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    NetworkSpec net = network_from_checkpoint(ckpt);
    if (k < 1 || k > net.n_classes)
        throw ArgumentError("k must be in [1," + std::to_string(net.n_classes) + "]");
    AugmentPipeline pipeline = eval_pipeline_for(ckpt.meta, arch_from_string(ckpt.arch));
    SeededRng rng(0);

    std::vector<Prediction> out;
    for (const std::string& path : image_paths) {
        Prediction pr;
        pr.path = path;
        try {
            Tensor img = grayscale_to_rgb(load_image(path));
            Tensor x = apply_pipeline(img, pipeline, rng, PipelineMode::eval);
            Tensor batch({1, 3, pipeline.target_side, pipeline.target_side});
            std::copy(x.data(), x.data() + x.size(), batch.data());
            Tensor probs = softmax(net.forward(batch, RunMode::infer, rng));
            std::vector<double> row(probs.data(), probs.data() + probs.dim(1));
            for (int idx : topk_indices(row, k)) {
                std::string name = idx < static_cast<int>(ckpt.meta.class_names.size())
                                       ? ckpt.meta.class_names[static_cast<size_t>(idx)]
                                       : "class" + std::to_string(idx);
                pr.ranked.emplace_back(name, row[static_cast<size_t>(idx)]);
            }
            pr.ok = true;
        } catch (const Error& e) {
            pr.error = e.what();
        }
        out.push_back(std::move(pr));
    }
    return out;
}

std::vector<SuiteRow> run_experiment_suite(const std::vector<ExperimentConfig>& configs) {
    if (configs.empty()) throw ArgumentError("suite needs at least one config");
    std::vector<SuiteRow> rows;
    for (const ExperimentConfig& cfg : configs) {
        SuiteRow row;
        row.cfg = cfg;
        try {
            Manifest manifest = load_manifest(cfg.data.manifest);
            row.result = run_training(cfg, manifest);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<SuiteRow> run_experiment_suite_files(const std::vector<std::string>& config_paths) {
    if (config_paths.empty()) throw ArgumentError("suite needs at least one config");
    std::vector<SuiteRow> rows;
    for (const std::string& path : config_paths) {
        SuiteRow row;
        row.cfg.name = path;
        try {
            row.cfg = config_from_json_file(path);
            Manifest manifest = load_manifest(row.cfg.data.manifest);
            row.result = run_training(row.cfg, manifest);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void export_suite_csv(const std::string& path, const std::vector<SuiteRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "order,name,network,batch_size,load_weights,train_layers,dropout_keep,start_lr,decay_step,"
           "decay_rate,batch_norm,num_aug,optimizer,epochs_ran,max_tra_acc,min_tra_loss,max_val_acc,"
           "min_val_loss,max_top1_test,max_top3_test,error\n";
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };
    for (size_t i = 0; i < rows.size(); ++i) {
        const SuiteRow& r = rows[i];
        const ExperimentConfig& c = r.cfg;
        out << (i + 1) << "," << c.name << "," << to_string(c.network) << "," << c.batch_size << ","
            << (c.load_weights ? "yes" : "no") << "," << to_string(c.freeze.variant) << "," << c.dropout_keep
            << "," << c.start_lr << "," << c.decay_step << "," << c.decay_rate << ","
            << (c.batch_norm ? "yes" : "no") << "," << c.num_aug << "," << to_string(c.optimizer) << ",";
        if (r.ok) {
            out << r.result.curve.size() << "," << num(r.result.max_train_acc) << ","
                << num(r.result.min_train_loss) << "," << num(r.result.max_val_acc) << ","
                << num(r.result.min_val_loss) << ",";
            out << (r.result.max_top1_test ? num(*r.result.max_top1_test) : "") << ",";
            out << (r.result.max_top3_test ? num(*r.result.max_top3_test) : "") << ",";
            out << "\n";
        } else {
            std::string err = r.error;
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            out << ",,,,,," << err << "\n";
        }
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

}  // namespace mfnet
