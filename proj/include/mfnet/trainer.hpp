#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mfnet/augment.hpp"
#include "mfnet/blocks.hpp"
#include "mfnet/dataset.hpp"
#include "mfnet/exports.hpp"
#include "mfnet/metrics.hpp"
#include "mfnet/optim.hpp"
#include "mfnet/transfer.hpp"

namespace mfnet {

struct EarlyStopConfig {
    int patience = 0;  // 0 disables early stopping
    double min_delta = 0.0;
};

struct DataConfig {
    std::string manifest;
    std::string split;        // optional split CSV; derived from split_seed when empty
    uint64_t split_seed = 0;
    std::string images_root;  // prepended to record paths when set
    int64_t rebalance_cap = 0;  // 0 disables undersampling
};

// One experiment row: architecture, batch size, freeze policy, dropout keep
// probability, LR schedule, augmentation preset, optimizer, epochs.
struct ExperimentConfig {
    std::string name = "run";
    ArchId network = ArchId::vgg16;
    int batch_size = 32;
    bool load_weights = false;
    std::string weights_path;
    FreezePolicy freeze;
    double dropout_keep = 1.0;
    double start_lr = 1e-4;
    int64_t decay_step = 0;  // 0 = no decay
    double decay_rate = 1.0;
    bool batch_norm = true;
    int num_aug = 3;
    OptimizerKind optimizer = OptimizerKind::adam;
    int epochs = 1;
    uint64_t seed = 0;
    ArchScale scale;
    DataConfig data;
    // extensions beyond the experiment table
    int test_cadence = 2;
    EarlyStopConfig early_stop;
    std::string output_dir = ".";
    std::string resume_from;  // checkpoint to continue from

    LrSchedule lr_schedule() const { return {start_lr, decay_step, decay_rate}; }
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig config_from_json_file(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

ArchFamily arch_family(ArchId arch);

struct RunResult {
    std::string best_checkpoint;
    std::string last_checkpoint;
    std::vector<CurveRow> curve;
    MetricsReport final_metrics;  // pooled validation+test at the best checkpoint
    int64_t best_epoch = 0;       // 1-based
    double max_train_acc = 0.0;
    double min_train_loss = 0.0;
    double max_val_acc = 0.0;
    double min_val_loss = 0.0;
    std::optional<double> max_top1_test;
    std::optional<double> max_top3_test;
};

RunResult run_training(const ExperimentConfig& cfg, const Manifest& manifest);

// ---- early stopping ----

struct EarlyStopDecision {
    bool stop = false;
    int64_t best_epoch = 0;  // 0-based index of the best entry so far
};

// Stops once the monitored (higher-is-better) metric has not improved by
// min_delta for `patience` consecutive epochs.
EarlyStopDecision early_stop_check(const std::vector<double>& history, int patience, double min_delta);

// ---- prediction ----

struct Prediction {
    std::string path;
    bool ok = false;
    std::string error;
    std::vector<std::pair<std::string, double>> ranked;  // (class name, probability)
};

std::vector<Prediction> predict_topk(const std::string& checkpoint_path,
                                     const std::vector<std::string>& image_paths, int k);

// ---- suites ----

struct SuiteRow {
    ExperimentConfig cfg;
    bool ok = false;
    std::string error;
    RunResult result;
};

std::vector<SuiteRow> run_experiment_suite(const std::vector<ExperimentConfig>& configs);
// File-based variant: a config that fails to parse or validate becomes an
// error row instead of aborting the remaining runs.
std::vector<SuiteRow> run_experiment_suite_files(const std::vector<std::string>& config_paths);
void export_suite_csv(const std::string& path, const std::vector<SuiteRow>& rows);

// Eval pipeline matching a checkpoint's preprocessing.
AugmentPipeline eval_pipeline_for(const CheckpointMeta& meta, ArchId arch);

// ---- checkpoint-driven evaluation, shared by the eval/features commands ----

struct PartitionEval {
    double loss = 0.0;
    double acc = 0.0;
    Tensor probs;  // [n, k]
    std::vector<int> labels;
    std::vector<int> predictions;
};

PartitionEval evaluate_with_checkpoint(const Checkpoint& ckpt, const Manifest& manifest,
                                       const std::vector<int>& indices, const DataConfig& data,
                                       int batch_size);

// Global-average-pooled activations of `node` (empty = the build's feature
// node) for every index, as a feature table keyed by record path.
FeatureTable features_with_checkpoint(const Checkpoint& ckpt, const Manifest& manifest,
                                      const std::vector<int>& indices, const DataConfig& data,
                                      const std::string& node, int batch_size);

}  // namespace mfnet
