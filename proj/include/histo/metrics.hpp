#ifndef HISTO_METRICS_HPP
#define HISTO_METRICS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "histo/labels.hpp"
#include "histo/tasks.hpp"

namespace histo {

struct ConfusionMatrix {
    int n_classes = 0;
    std::vector<std::int64_t> counts; // row-major, counts[true][pred]
    std::vector<std::string> class_names;

    std::int64_t& at(int true_class, int pred_class) {
        return counts[static_cast<std::size_t>(true_class) * n_classes + pred_class];
    }
    std::int64_t at(int true_class, int pred_class) const {
        return counts[static_cast<std::size_t>(true_class) * n_classes + pred_class];
    }
    std::int64_t total() const;
    std::int64_t row_sum(int true_class) const;
    std::int64_t col_sum(int pred_class) const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          int n_classes, std::vector<std::string> class_names = {});

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;
};

struct MetricReport {
    std::vector<ClassMetrics> per_class;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    double accuracy = 0.0;
    std::vector<std::string> class_names;
    // Classes whose precision or recall hit a zero denominator (no predicted
    // or no true instances); the metric is reported as 0 and flagged here.
    std::vector<int> degenerate_classes;

    bool degenerate() const { return !degenerate_classes.empty(); }
};

MetricReport report(const ConfusionMatrix& cm);

struct RocCurve {
    // Parallel arrays; point i is (fpr[i], tpr[i]) at score threshold
    // thresholds[i] (predict positive when score >= threshold). Begins at
    // (0,0) with threshold +inf and ends at (1,1).
    std::vector<double> thresholds;
    std::vector<double> fpr;
    std::vector<double> tpr;
    double auc = 0.0;
    int positive_class = 1;
};

// scores are positive-class probabilities; labels are task-class indices.
// Ties are grouped per threshold; AUC is the trapezoidal area, which equals
// the probability a random positive outranks a random negative with ties
// counting one half.
RocCurve roc(std::span<const double> scores, std::span<const int> labels,
             int positive_class = 1);

// Per-tumor-type tile accuracy from the four binary-task accuracies:
//   NT  = mean(NT_vs_REST, NCT_vs_NT, VT_vs_NT)
//   NCT = mean(NCT_vs_NT, NCT_vs_VT)
//   VT  = mean(VT_vs_NT, NCT_vs_VT)
// Values stay in the input scale (fractions in, fractions out).
std::map<ClassLabel, double>
tumor_type_aggregate(const std::map<TaskName, double>& binary_accuracies);

void write_metrics_json(const std::filesystem::path& path, const MetricReport& report);
MetricReport load_metrics_json(const std::filesystem::path& path);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);
RocCurve load_roc_csv(const std::filesystem::path& path);

} // namespace histo

#endif
