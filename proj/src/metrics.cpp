#include "mfnet/metrics.hpp"

#include <cmath>

namespace mfnet {

int64_t ConfusionMatrix::total() const {
    int64_t n = 0;
    for (const auto& row : counts)
        for (int64_t v : row) n += v;
    return n;
}

int64_t ConfusionMatrix::trace() const {
    int64_t n = 0;
    for (size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
    return n;
}

int64_t ConfusionMatrix::row_total(int64_t t) const {
    int64_t n = 0;
    for (int64_t v : counts[static_cast<size_t>(t)]) n += v;
    return n;
}

int64_t ConfusionMatrix::col_total(int64_t p) const {
    int64_t n = 0;
    for (const auto& row : counts) n += row[static_cast<size_t>(p)];
    return n;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& true_labels, const std::vector<int>& pred_labels,
                                 int k) {
    if (k < 1) throw ArgumentError("confusion matrix needs k >= 1");
    if (true_labels.size() != pred_labels.size())
        throw ArgumentError("label lists differ in length: " + std::to_string(true_labels.size()) + " vs " +
                            std::to_string(pred_labels.size()));
    ConfusionMatrix cm;
    cm.counts.assign(static_cast<size_t>(k), std::vector<int64_t>(static_cast<size_t>(k), 0));
    for (size_t i = 0; i < true_labels.size(); ++i) {
        int t = true_labels[i], p = pred_labels[i];
        if (t < 0 || t >= k || p < 0 || p >= k)
            throw ArgumentError("label out of range [0," + std::to_string(k) + ") at row " +
                                std::to_string(i));
        cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)] += 1;
    }
    return cm;
}

MetricsReport metrics_from_cm(const ConfusionMatrix& cm) {
    int64_t k = cm.k();
    if (k == 0) throw ArgumentError("empty confusion matrix");
    int64_t total = cm.total();
    if (total == 0) throw ArgumentError("confusion matrix has no observations");

    MetricsReport r;
    r.precision.resize(static_cast<size_t>(k));
    r.recall.resize(static_cast<size_t>(k));
    r.f1.resize(static_cast<size_t>(k));

    for (int64_t c = 0; c < k; ++c) {
        int64_t tp = cm.counts[static_cast<size_t>(c)][static_cast<size_t>(c)];
        int64_t fp = cm.col_total(c) - tp;
        int64_t fn = cm.row_total(c) - tp;

        MetricValue prec, rec, f1;
        if (tp + fp > 0) prec = {static_cast<double>(tp) / static_cast<double>(tp + fp), true};
        if (tp + fn > 0) rec = {static_cast<double>(tp) / static_cast<double>(tp + fn), true};
        if (prec.defined && rec.defined && prec.value + rec.value > 0.0)
            f1 = {2.0 * prec.value * rec.value / (prec.value + rec.value), true};
        r.precision[static_cast<size_t>(c)] = prec;
        r.recall[static_cast<size_t>(c)] = rec;
        r.f1[static_cast<size_t>(c)] = f1;
    }
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    r.macro_precision = macro_stats(r.precision);
    r.macro_recall = macro_stats(r.recall);
    r.macro_f1 = macro_stats(r.f1);
    return r;
}

std::map<int, double> topk_accuracy(const Tensor& prob_rows, const std::vector<int>& labels,
                                    const std::vector<int>& k_values) {
    if (prob_rows.rank() != 2)
        throw DimensionError("topk_accuracy expects [n,k] probabilities, got " +
                             shape_to_string(prob_rows.shape()));
    int64_t n = prob_rows.dim(0), classes = prob_rows.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) throw ArgumentError("label count does not match rows");
    for (int k : k_values)
        if (k < 1 || k > classes)
            throw ArgumentError("top-k with k=" + std::to_string(k) + " out of range for " +
                                std::to_string(classes) + " classes");

    std::map<int, int64_t> hits;
    for (int k : k_values) hits[k] = 0;
    std::vector<double> row(static_cast<size_t>(classes));
    for (int64_t i = 0; i < n; ++i) {
        std::copy(prob_rows.data() + i * classes, prob_rows.data() + (i + 1) * classes, row.begin());
        int label = labels[static_cast<size_t>(i)];
        if (label < 0 || label >= classes) throw ArgumentError("label out of range");
        for (int k : k_values) {
            std::vector<int> top = topk_indices(row, k);
            for (int idx : top)
                if (idx == label) {
                    hits[k] += 1;
                    break;
                }
        }
    }
    std::map<int, double> out;
    for (int k : k_values) out[k] = static_cast<double>(hits[k]) / static_cast<double>(n);
    return out;
}

MacroStat macro_stats(const std::vector<MetricValue>& values) {
    MacroStat s;
    double sum = 0.0;
    for (const MetricValue& v : values)
        if (v.defined) {
            sum += v.value;
            ++s.count;
        }
    if (s.count == 0) throw ArgumentError("macro stats need at least one defined value");
    s.mean = sum / static_cast<double>(s.count);
    double sq = 0.0;
    for (const MetricValue& v : values)
        if (v.defined) {
            double d = v.value - s.mean;
            sq += d * d;
        }
    s.stddev = std::sqrt(sq / static_cast<double>(s.count));
    return s;
}

}  // namespace mfnet
