#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mfnet/metrics.hpp"
#include "mfnet/tsne.hpp"

namespace mfnet {

struct CurveRow {
    int64_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    std::optional<double> test_top1;  // filled on test-cadence epochs only
    std::optional<double> test_top3;
    // full-epoch averages, an extension next to the single-batch samples
    double train_loss_avg = 0.0;
    double train_acc_avg = 0.0;
};

// Header: epoch,train_loss,train_acc,val_loss,val_acc,test_top1,test_top3,
// train_loss_avg,train_acc_avg. Test columns stay blank off-cadence.
void export_curves_csv(const std::string& path, const std::vector<CurveRow>& rows);

// Raw integer counts.
void export_confusion_counts_csv(const std::string& path, const ConfusionMatrix& cm);
// Row-normalized fractions, two decimals per cell.
void export_confusion_normalized_csv(const std::string& path, const ConfusionMatrix& cm);

// Per-class precision/recall/F1 plus the macro summary, two decimals.
void export_metrics_report(const std::string& path, const MetricsReport& report,
                           const std::vector<std::string>& class_names);

// id,class,x,y
void export_embeddings_csv(const std::string& path, const EmbeddingSet& embedding,
                           const std::vector<std::string>& ids);

// One min-max normalized PGM per channel: <prefix>_c<channel>.pgm.
// Returns the written paths.
std::vector<std::string> export_feature_maps(const std::string& prefix, const Tensor& maps_chw);

// feature CSV: id,class,f0..f{d-1}
void export_features_csv(const std::string& path, const Tensor& features, const std::vector<int>& class_ids,
                         const std::vector<std::string>& ids);
struct FeatureTable {
    Tensor features;
    std::vector<int> class_ids;
    std::vector<std::string> ids;
};
FeatureTable load_features_csv(const std::string& path);

}  // namespace mfnet
