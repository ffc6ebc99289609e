#include "histo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "histo/errors.hpp"

using json = nlohmann::json;

namespace histo {

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::row_sum(int true_class) const {
    std::int64_t sum = 0;
    for (int j = 0; j < n_classes; ++j)
        sum += at(true_class, j);
    return sum;
}

std::int64_t ConfusionMatrix::col_sum(int pred_class) const {
    std::int64_t sum = 0;
    for (int i = 0; i < n_classes; ++i)
        sum += at(i, pred_class);
    return sum;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          int n_classes, std::vector<std::string> class_names) {
    if (truth.size() != predicted.size())
        throw InputError("confusion: truth has " + std::to_string(truth.size()) +
                         " labels, predicted has " + std::to_string(predicted.size()));
    if (n_classes < 1)
        throw InputError("confusion: n_classes must be >= 1");
    ConfusionMatrix cm;
    cm.n_classes = n_classes;
    cm.counts.assign(static_cast<std::size_t>(n_classes) * n_classes, 0);
    if (class_names.empty())
        for (int c = 0; c < n_classes; ++c)
            class_names.push_back("class" + std::to_string(c));
    if (static_cast<int>(class_names.size()) != n_classes)
        throw InputError("confusion: class_names size must match n_classes");
    cm.class_names = std::move(class_names);
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const int t = truth[k], p = predicted[k];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
            throw InputError("confusion: label out of range at index " + std::to_string(k));
        ++cm.at(t, p);
    }
    return cm;
}

MetricReport report(const ConfusionMatrix& cm) {
    MetricReport rep;
    rep.class_names = cm.class_names;
    const std::int64_t total = cm.total();
    std::int64_t diag = 0;
    double wp = 0.0, wr = 0.0, wf = 0.0;
    for (int c = 0; c < cm.n_classes; ++c) {
        ClassMetrics m;
        const std::int64_t tp = cm.at(c, c);
        const std::int64_t pred_c = cm.col_sum(c);
        const std::int64_t true_c = cm.row_sum(c);
        m.support = true_c;
        bool flagged = false;
        if (pred_c > 0) {
            m.precision = static_cast<double>(tp) / static_cast<double>(pred_c);
        } else {
            m.precision = 0.0;
            flagged = true;
        }
        if (true_c > 0) {
            m.recall = static_cast<double>(tp) / static_cast<double>(true_c);
        } else {
            m.recall = 0.0;
            flagged = true;
        }
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        if (flagged)
            rep.degenerate_classes.push_back(c);
        diag += tp;
        wp += m.precision * static_cast<double>(m.support);
        wr += m.recall * static_cast<double>(m.support);
        wf += m.f1 * static_cast<double>(m.support);
        rep.per_class.push_back(m);
    }
    if (total > 0) {
        rep.accuracy = static_cast<double>(diag) / static_cast<double>(total);
        rep.weighted_precision = wp / static_cast<double>(total);
        rep.weighted_recall = wr / static_cast<double>(total);
        rep.weighted_f1 = wf / static_cast<double>(total);
    }
    return rep;
}

RocCurve roc(std::span<const double> scores, std::span<const int> labels, int positive_class) {
    if (scores.size() != labels.size())
        throw InputError("roc: scores and labels length mismatch");
    std::int64_t n_pos = 0, n_neg = 0;
    for (int label : labels)
        (label == positive_class ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw RocUndefinedError("roc needs at least one positive and one negative label");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.positive_class = positive_class;
    curve.thresholds.push_back(std::numeric_limits<double>::infinity());
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);

    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        // Consume the whole tie group at this score in one step.
        while (i < order.size() && scores[order[i]] == threshold) {
            (labels[order[i]] == positive_class ? tp : fp)++;
            ++i;
        }
        curve.thresholds.push_back(threshold);
        curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
        curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
    }

    double auc = 0.0;
    for (std::size_t k = 1; k < curve.fpr.size(); ++k)
        auc += (curve.fpr[k] - curve.fpr[k - 1]) * (curve.tpr[k] + curve.tpr[k - 1]) * 0.5;
    curve.auc = auc;
    return curve;
}

std::map<ClassLabel, double>
tumor_type_aggregate(const std::map<TaskName, double>& binary_accuracies) {
    auto get = [&](TaskName t) {
        auto it = binary_accuracies.find(t);
        if (it == binary_accuracies.end())
            throw AggregationError("missing binary-task accuracy for " + task_name_str(t));
        return it->second;
    };
    const double nt_rest = get(TaskName::NT_vs_REST);
    const double nct_nt = get(TaskName::NCT_vs_NT);
    const double vt_nt = get(TaskName::VT_vs_NT);
    const double nct_vt = get(TaskName::NCT_vs_VT);
    return {
        {ClassLabel::NT, (nt_rest + nct_nt + vt_nt) / 3.0},
        {ClassLabel::NCT, (nct_nt + nct_vt) / 2.0},
        {ClassLabel::VT, (vt_nt + nct_vt) / 2.0},
    };
}

void write_metrics_json(const std::filesystem::path& path, const MetricReport& rep) {
    json per_class = json::object();
    for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
        const ClassMetrics& m = rep.per_class[c];
        per_class[rep.class_names[c]] = {
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"support", m.support},
        };
    }
    json degenerate = json::array();
    for (int c : rep.degenerate_classes)
        degenerate.push_back(rep.class_names[static_cast<std::size_t>(c)]);
    json doc = {
        {"accuracy", rep.accuracy},
        {"per_class", per_class},
        {"weighted",
         {{"precision", rep.weighted_precision},
          {"recall", rep.weighted_recall},
          {"f1", rep.weighted_f1}}},
        {"degenerate_classes", degenerate},
        {"class_order", rep.class_names},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write metrics file: " + path.string());
    out << doc.dump(2) << "\n";
}

MetricReport load_metrics_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open metrics file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw InputError("malformed metrics file " + path.string() + ": " + e.what());
    }
    MetricReport rep;
    rep.accuracy = doc.at("accuracy").get<double>();
    rep.weighted_precision = doc.at("weighted").at("precision").get<double>();
    rep.weighted_recall = doc.at("weighted").at("recall").get<double>();
    rep.weighted_f1 = doc.at("weighted").at("f1").get<double>();
    rep.class_names = doc.at("class_order").get<std::vector<std::string>>();
    for (const std::string& name : rep.class_names) {
        const json& m = doc.at("per_class").at(name);
        rep.per_class.push_back({m.at("precision").get<double>(), m.at("recall").get<double>(),
                                 m.at("f1").get<double>(), m.at("support").get<std::int64_t>()});
    }
    for (const auto& name : doc.at("degenerate_classes")) {
        auto it = std::find(rep.class_names.begin(), rep.class_names.end(),
                            name.get<std::string>());
        if (it != rep.class_names.end())
            rep.degenerate_classes.push_back(
                static_cast<int>(it - rep.class_names.begin()));
    }
    return rep;
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write confusion file: " + path.string());
    out << "true\\pred";
    for (const std::string& name : cm.class_names)
        out << "," << name;
    out << "\n";
    for (int i = 0; i < cm.n_classes; ++i) {
        out << cm.class_names[static_cast<std::size_t>(i)];
        for (int j = 0; j < cm.n_classes; ++j)
            out << "," << cm.at(i, j);
        out << "\n";
    }
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write ROC file: " + path.string());
    out << "threshold,fpr,tpr\n";
    out.precision(17);
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
        out << curve.thresholds[i] << "," << curve.fpr[i] << "," << curve.tpr[i] << "\n";
}

RocCurve load_roc_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open ROC file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("threshold,fpr,tpr", 0) != 0)
        throw InputError("malformed ROC file: " + path.string());
    RocCurve curve;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        double vals[3];
        for (double& v : vals) {
            if (!std::getline(ss, cell, ','))
                throw InputError("malformed ROC row in " + path.string());
            v = std::strtod(cell.c_str(), nullptr);
        }
        curve.thresholds.push_back(vals[0]);
        curve.fpr.push_back(vals[1]);
        curve.tpr.push_back(vals[2]);
    }
    for (std::size_t k = 1; k < curve.fpr.size(); ++k)
        curve.auc +=
            (curve.fpr[k] - curve.fpr[k - 1]) * (curve.tpr[k] + curve.tpr[k - 1]) * 0.5;
    return curve;
}

} // namespace histo
