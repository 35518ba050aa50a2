#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfnet/tensor.hpp"

namespace mfnet {

struct ConfusionMatrix {
    std::vector<std::vector<int64_t>> counts;  // counts[true][pred]
    std::vector<std::string> class_names;      // optional, sized k or empty

    int64_t k() const { return static_cast<int64_t>(counts.size()); }
    int64_t total() const;
    int64_t trace() const;
    int64_t row_total(int64_t t) const;
    int64_t col_total(int64_t p) const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& true_labels, const std::vector<int>& pred_labels,
                                 int k);

// A 0/0 metric is undefined, flagged rather than coerced to 0 or 1.
struct MetricValue {
    double value = 0.0;
    bool defined = false;
};

struct MacroStat {
    double mean = 0.0;
    double stddev = 0.0;  // population
    int64_t count = 0;
};

struct MetricsReport {
    std::vector<MetricValue> precision;
    std::vector<MetricValue> recall;
    std::vector<MetricValue> f1;
    double accuracy = 0.0;
    std::map<int, double> topk;  // k -> accuracy, filled by topk_accuracy
    MacroStat macro_precision;
    MacroStat macro_recall;
    MacroStat macro_f1;
};

MetricsReport metrics_from_cm(const ConfusionMatrix& cm);

std::map<int, double> topk_accuracy(const Tensor& prob_rows, const std::vector<int>& labels,
                                    const std::vector<int>& k_values);

MacroStat macro_stats(const std::vector<MetricValue>& values);

}  // namespace mfnet
