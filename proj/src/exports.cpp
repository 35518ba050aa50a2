#include "mfnet/exports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mfnet/image_io.hpp"

namespace mfnet {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace

void export_curves_csv(const std::string& path, const std::vector<CurveRow>& rows) {
    if (rows.empty()) throw ArgumentError("curve log is empty");
    std::ofstream out = open_out(path);
    out << "epoch,train_loss,train_acc,val_loss,val_acc,test_top1,test_top3,train_loss_avg,train_acc_avg\n";
    for (const CurveRow& r : rows) {
        out << r.epoch << "," << fmt(r.train_loss) << "," << fmt(r.train_acc) << "," << fmt(r.val_loss) << ","
            << fmt(r.val_acc) << ",";
        if (r.test_top1) out << fmt(*r.test_top1);
        out << ",";
        if (r.test_top3) out << fmt(*r.test_top3);
        out << "," << fmt(r.train_loss_avg) << "," << fmt(r.train_acc_avg) << "\n";
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

void export_confusion_counts_csv(const std::string& path, const ConfusionMatrix& cm) {
    if (cm.k() == 0) throw ArgumentError("empty confusion matrix");
    std::ofstream out = open_out(path);
    out << "true\\pred";
    for (int64_t p = 0; p < cm.k(); ++p)
        out << "," << (cm.class_names.empty() ? "c" + std::to_string(p) : cm.class_names[static_cast<size_t>(p)]);
    out << "\n";
    for (int64_t t = 0; t < cm.k(); ++t) {
        out << (cm.class_names.empty() ? "c" + std::to_string(t) : cm.class_names[static_cast<size_t>(t)]);
        for (int64_t p = 0; p < cm.k(); ++p) out << "," << cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)];
        out << "\n";
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

void export_confusion_normalized_csv(const std::string& path, const ConfusionMatrix& cm) {
    if (cm.k() == 0) throw ArgumentError("empty confusion matrix");
    std::ofstream out = open_out(path);
    out << "true\\pred";
    for (int64_t p = 0; p < cm.k(); ++p)
        out << "," << (cm.class_names.empty() ? "c" + std::to_string(p) : cm.class_names[static_cast<size_t>(p)]);
    out << "\n";
    for (int64_t t = 0; t < cm.k(); ++t) {
        out << (cm.class_names.empty() ? "c" + std::to_string(t) : cm.class_names[static_cast<size_t>(t)]);
        int64_t total = cm.row_total(t);
        for (int64_t p = 0; p < cm.k(); ++p) {
            double v = total == 0 ? 0.0
                                  : static_cast<double>(cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)]) /
                                        static_cast<double>(total);
            out << "," << fmt(v, "%.2f");
        }
        out << "\n";
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

void export_metrics_report(const std::string& path, const MetricsReport& report,
                           const std::vector<std::string>& class_names) {
    std::ofstream out = open_out(path);
    out << "class,precision,recall,f1\n";
    for (size_t c = 0; c < report.precision.size(); ++c) {
        out << (c < class_names.size() ? class_names[c] : "c" + std::to_string(c));
        for (const auto* m : {&report.precision[c], &report.recall[c], &report.f1[c]})
            out << "," << (m->defined ? fmt(m->value, "%.2f") : "undefined");
        out << "\n";
    }
    out << "\n";
    out << "accuracy," << fmt(report.accuracy, "%.2f") << "\n";
    for (const auto& [k, acc] : report.topk) out << "top" << k << "_accuracy," << fmt(acc, "%.2f") << "\n";
    // macro figures use the population standard deviation
    out << "macro_precision," << fmt(report.macro_precision.mean, "%.2f") << " +- "
        << fmt(report.macro_precision.stddev, "%.2f") << "\n";
    out << "macro_recall," << fmt(report.macro_recall.mean, "%.2f") << " +- "
        << fmt(report.macro_recall.stddev, "%.2f") << "\n";
    out << "macro_f1," << fmt(report.macro_f1.mean, "%.2f") << " +- " << fmt(report.macro_f1.stddev, "%.2f")
        << "\n";
    if (!out) throw IoError("write failure on '" + path + "'");
}

void export_embeddings_csv(const std::string& path, const EmbeddingSet& embedding,
                           const std::vector<std::string>& ids) {
    int64_t n = embedding.coords.dim(0);
    if (!ids.empty() && static_cast<int64_t>(ids.size()) != n)
        throw ArgumentError("id count does not match embedding size");
    std::ofstream out = open_out(path);
    out << "id,class,x,y\n";
    for (int64_t i = 0; i < n; ++i) {
        out << (ids.empty() ? std::to_string(i) : ids[static_cast<size_t>(i)]) << ","
            << embedding.class_ids[static_cast<size_t>(i)] << "," << fmt(embedding.coords.at2(i, 0)) << ","
            << fmt(embedding.coords.at2(i, 1)) << "\n";
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

std::vector<std::string> export_feature_maps(const std::string& prefix, const Tensor& maps_chw) {
    if (maps_chw.rank() != 3)
        throw DimensionError("feature maps must be [c,h,w], got " + shape_to_string(maps_chw.shape()));
    int64_t c = maps_chw.dim(0), h = maps_chw.dim(1), w = maps_chw.dim(2);
    std::vector<std::string> written;
    for (int64_t ch = 0; ch < c; ++ch) {
        const double* plane = maps_chw.data() + ch * h * w;
        double lo = plane[0], hi = plane[0];
        for (int64_t p = 0; p < h * w; ++p) {
            lo = std::min(lo, plane[p]);
            hi = std::max(hi, plane[p]);
        }
        double span = hi - lo;
        Tensor img({h, w});
        for (int64_t p = 0; p < h * w; ++p) img[p] = span > 0.0 ? (plane[p] - lo) / span : 0.0;
        std::string path = prefix + "_c" + std::to_string(ch) + ".pgm";
        save_pgm(path, img);
        written.push_back(std::move(path));
    }
    return written;
}

void export_features_csv(const std::string& path, const Tensor& features, const std::vector<int>& class_ids,
                         const std::vector<std::string>& ids) {
    if (features.rank() != 2) throw DimensionError("features must be [n,d]");
    int64_t n = features.dim(0), d = features.dim(1);
    if (static_cast<int64_t>(class_ids.size()) != n) throw ArgumentError("class id count mismatch");
    std::ofstream out = open_out(path);
    out << "id,class";
    for (int64_t f = 0; f < d; ++f) out << ",f" << f;
    out << "\n";
    for (int64_t i = 0; i < n; ++i) {
        out << (ids.empty() ? std::to_string(i) : ids[static_cast<size_t>(i)]) << ","
            << class_ids[static_cast<size_t>(i)];
        for (int64_t f = 0; f < d; ++f) out << "," << fmt(features.at2(i, f), "%.9g");
        out << "\n";
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

FeatureTable load_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("feature CSV is empty");

    FeatureTable table;
    std::vector<double> values;
    int64_t d = -1, n = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::getline(row, field, ',');
        table.ids.push_back(field);
        std::getline(row, field, ',');
        int64_t count = 0;
        try {
            table.class_ids.push_back(std::stoi(field));
            while (std::getline(row, field, ',')) {
                values.push_back(std::stod(field));
                ++count;
            }
        } catch (const std::exception&) {
            throw FormatError("feature CSV row " + std::to_string(n + 2) + " has a non-numeric field '" +
                              field + "'");
        }
        if (d < 0) d = count;
        if (count != d) throw FormatError("ragged feature CSV at row " + std::to_string(n + 2));
        ++n;
    }
    if (n == 0 || d < 1) throw FormatError("feature CSV has no data rows");
    table.features = Tensor::from({n, d}, std::move(values));
    return table;
}

}  // namespace mfnet
