#include "histo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "histo/errors.hpp"
#include "histo/metrics.hpp"
#include "histo/svg_plot.hpp"

namespace fs = std::filesystem;

namespace histo {

namespace {

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
    return buf;
}

std::string two_dp(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace

int cmd_prepare(const ExperimentPlan& plan, std::ostream& log) {
    if (plan.dataset_root.empty())
        throw ConfigurationError("dataset root is not configured");
    ManifestLoadOptions opts;
    opts.layout = plan.layout;
    opts.expected_tile_px = plan.expected_tile_px;
    DatasetManifest manifest = load_manifest(plan.dataset_root, opts);
    SplitAssignment split =
        split_dataset(manifest, plan.ratios, plan.split_seed, {plan.group_by_wsi});

    fs::create_directories(plan.results_dir);
    save_manifest_csv(manifest, plan.results_dir / "manifest.csv");
    save_split_json(split, plan.results_dir / "split.json");

    const auto sizes = split.partition_sizes();
    log << "dataset: " << manifest.total() << " tiles (NT " << manifest.count(ClassLabel::NT)
        << ", NCT " << manifest.count(ClassLabel::NCT) << ", VT "
        << manifest.count(ClassLabel::VT) << ")\n";
    log << "split: train " << sizes[0] << ", val " << sizes[1] << ", test " << sizes[2]
        << " (seed " << split.seed << (plan.group_by_wsi ? ", grouped by WSI" : "") << ")\n";
    log << "wrote " << (plan.results_dir / "manifest.csv").string() << " and "
        << (plan.results_dir / "split.json").string() << "\n";
    return 0;
}

namespace {

struct RunJob {
    TaskName task;
    Backbone backbone;
};

// One cell of the experiment matrix: train, evaluate on the test partition,
// persist artifacts. Returns false on failure (recorded, matrix continues).
bool execute_run(const ExperimentPlan& plan, const DatasetManifest& manifest,
                 const SplitAssignment& split, const RunJob& job, bool force,
                 std::ostream& log, std::mutex& log_mutex) {
    const std::string rid = run_id_for(job.task, job.backbone, plan.train.seed);
    const fs::path run_dir = plan.results_dir / rid;
    if (!force && fs::exists(run_dir / "run.json")) {
        std::lock_guard lock(log_mutex);
        log << rid << ": already complete, skipping (use --force to retrain)\n";
        return true;
    }
    try {
        const TaskSpec task = TaskSpec::get(job.task);
        TaskDataset data = derive_task(manifest, split, task);

        AugmentConfig aug = plan.augment;
        BatchStream train_stream(data.of(Partition::train), plan.train.batch_sizes.train,
                                 BatchStream::Mode::train, aug);
        BatchStream val_stream(data.of(Partition::val), plan.train.batch_sizes.val,
                               BatchStream::Mode::eval, aug);

        ModelHandle model = build_model(plan.model_config_for(job.backbone, task.n_classes));
        TrainRunRecord record =
            train(model, train_stream, val_stream, plan.train, task, rid, run_dir);

        BatchStream test_stream(data.of(Partition::test), plan.train.batch_sizes.test,
                                BatchStream::Mode::eval, aug);
        Predictions preds = predict(model, test_stream);
        ConfusionMatrix cm =
            confusion(preds.truth, preds.predicted, task.n_classes, task.class_names());
        MetricReport rep = report(cm);
        rep.class_names = cm.class_names;
        write_metrics_json(run_dir / "metrics.json", rep);
        write_confusion_csv(run_dir / "confusion.csv", cm);

        if (task.is_binary()) {
            std::vector<double> scores(preds.truth.size());
            for (std::size_t i = 0; i < scores.size(); ++i)
                scores[i] = preds.probabilities
                                .data[i * std::size_t(task.n_classes) +
                                      std::size_t(task.positive_class)];
            RocCurve curve = roc(scores, preds.truth, task.positive_class);
            write_roc_csv(run_dir / "roc.csv", curve);
            try {
                fs::create_directories(run_dir / "plots");
                PlotSeries series{backbone_name(job.backbone) + " (AUC " + two_dp(curve.auc) +
                                      ")",
                                  curve.fpr, curve.tpr};
                write_roc_svg(run_dir / "plots" / "roc.svg", task_name_str(job.task), {series});
            } catch (const std::exception& e) {
                std::lock_guard lock(log_mutex);
                log << rid << ": plot rendering unavailable (" << e.what()
                    << "), CSV output only\n";
            }
        }
        save_run_record(record, run_dir);

        {
            std::lock_guard lock(log_mutex);
            log << rid << ": " << stop_reason_str(record.stop_reason) << " after "
                << record.epoch_history.size() << " epoch(s), test accuracy "
                << two_dp(rep.accuracy) << "\n";
        }
        return record.stop_reason != StopReason::error;
    } catch (const std::exception& e) {
        {
            std::lock_guard lock(log_mutex);
            log << rid << ": FAILED (" << e.what() << ")\n";
        }
        try {
            TrainRunRecord failed;
            failed.run_id = rid;
            failed.task = job.task;
            failed.model_config = plan.model_config_for(job.backbone, 2);
            failed.train_config = plan.train;
            failed.augment_config = plan.augment;
            failed.stop_reason = StopReason::error;
            failed.error_message = e.what();
            save_run_record(failed, run_dir);
        } catch (...) {
            // the failure is already logged; nothing else to persist
        }
        return false;
    }
}

} // namespace

int cmd_run(const ExperimentPlan& plan, const RunFilters& filters, std::ostream& log) {
    const fs::path manifest_csv = plan.results_dir / "manifest.csv";
    const fs::path split_json = plan.results_dir / "split.json";
    if (!fs::exists(manifest_csv) || !fs::exists(split_json))
        throw ConfigurationError("missing " + manifest_csv.string() + " or " +
                                 split_json.string() + "; run `prepare` first");

    DatasetManifest manifest =
        load_manifest(manifest_csv, {.layout = ManifestLayout::csv_manifest});
    SplitAssignment split = load_split_json(split_json);

    const auto& tasks = filters.tasks.empty() ? plan.tasks : filters.tasks;
    const auto& backbones = filters.backbones.empty() ? plan.backbones : filters.backbones;
    std::vector<RunJob> jobs;
    for (TaskName task : tasks)
        for (Backbone backbone : backbones)
            jobs.push_back({task, backbone});

    std::mutex log_mutex;
    std::atomic<std::size_t> next{0};
    std::atomic<int> failures{0};
    const int workers = std::max(1, std::min<int>(filters.parallel, int(jobs.size())));
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size())
                return;
            if (!execute_run(plan, manifest, split, jobs[i], filters.force, log, log_mutex))
                failures.fetch_add(1);
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    if (failures.load() > 0) {
        log << failures.load() << " of " << jobs.size() << " runs failed\n";
        return 1;
    }
    return 0;
}

namespace {

struct LoadedRun {
    TrainRunRecord record;
    std::optional<MetricReport> metrics;
    fs::path dir;
};

std::string csv_escape(const std::string& s) {
    return s; // labels contain no commas by construction
}

} // namespace

int cmd_report(const fs::path& results_dir, std::ostream& log) {
    if (!fs::is_directory(results_dir))
        throw ConfigurationError("results directory does not exist: " + results_dir.string());

    std::map<std::string, LoadedRun> runs; // run_id -> artifacts
    for (const auto& entry : fs::directory_iterator(results_dir)) {
        if (!entry.is_directory() || !fs::exists(entry.path() / "run.json"))
            continue;
        LoadedRun run;
        run.record = load_run_record(entry.path());
        run.dir = entry.path();
        if (fs::exists(entry.path() / "metrics.json"))
            run.metrics = load_metrics_json(entry.path() / "metrics.json");
        runs[run.record.run_id] = std::move(run);
    }
    if (runs.empty())
        throw ConfigurationError("no completed runs under " + results_dir.string());

    std::set<std::string> backbones;
    std::set<TaskName> tasks;
    std::vector<std::string> incomplete;
    for (const auto& [rid, run] : runs) {
        backbones.insert(backbone_name(run.record.model_config.backbone));
        tasks.insert(run.record.task);
        if (!run.metrics)
            incomplete.push_back(rid);
    }
    auto find_run = [&](TaskName task, const std::string& backbone) -> const LoadedRun* {
        for (const auto& [rid, run] : runs)
            if (run.record.task == task &&
                backbone_name(run.record.model_config.backbone) == backbone && run.metrics)
                return &run;
        return nullptr;
    };

    const fs::path report_dir = results_dir / "report";
    fs::create_directories(report_dir / "plots");
    std::ofstream text(report_dir / "report.txt", std::ios::binary);

    // (a) multiclass backbone comparison
    {
        std::ofstream csv(report_dir / "multiclass_comparison.csv", std::ios::binary);
        csv << "model,weighted_precision,weighted_recall,weighted_f1,accuracy\n";
        csv.precision(17);
        text << "Multiclass comparison\n";
        text << "model          w.precision  w.recall  w.f1  accuracy\n";
        for (const std::string& backbone : backbones) {
            const LoadedRun* run = find_run(TaskName::MULTICLASS, backbone);
            if (!run) {
                csv << csv_escape(backbone) << ",missing,missing,missing,missing\n";
                text << backbone << "  missing\n";
                continue;
            }
            const MetricReport& m = *run->metrics;
            csv << csv_escape(backbone) << "," << m.weighted_precision << ","
                << m.weighted_recall << "," << m.weighted_f1 << "," << m.accuracy << "\n";
            char line[160];
            std::snprintf(line, sizeof(line), "%-14s %-12s %-9s %-5s %.3f", backbone.c_str(),
                          two_dp(m.weighted_precision).c_str(),
                          two_dp(m.weighted_recall).c_str(), two_dp(m.weighted_f1).c_str(),
                          m.accuracy);
            text << line << "\n";
        }
        text << "\n";
    }

    // (b) per-class metrics for every completed (task, model)
    {
        std::ofstream csv(report_dir / "per_class_metrics.csv", std::ios::binary);
        csv << "task,model,class,precision,recall,f1,support\n";
        csv.precision(17);
        text << "Per-class metrics\n";
        for (TaskName task : tasks) {
            for (const std::string& backbone : backbones) {
                const LoadedRun* run = find_run(task, backbone);
                if (!run)
                    continue;
                const MetricReport& m = *run->metrics;
                for (std::size_t c = 0; c < m.per_class.size(); ++c) {
                    csv << task_name_str(task) << "," << backbone << ","
                        << m.class_names[c] << "," << m.per_class[c].precision << ","
                        << m.per_class[c].recall << "," << m.per_class[c].f1 << ","
                        << m.per_class[c].support << "\n";
                    char line[200];
                    std::snprintf(line, sizeof(line),
                                  "%-12s %-12s %-8s P %s  R %s  F1 %s  (n=%lld)",
                                  task_name_str(task).c_str(), backbone.c_str(),
                                  m.class_names[c].c_str(),
                                  two_dp(m.per_class[c].precision).c_str(),
                                  two_dp(m.per_class[c].recall).c_str(),
                                  two_dp(m.per_class[c].f1).c_str(),
                                  static_cast<long long>(m.per_class[c].support));
                    text << line << "\n";
                }
            }
        }
        text << "\n";
    }

    // (c) per-tumor-type tile-accuracy aggregate per model
    {
        std::ofstream csv(report_dir / "tumor_type_aggregate.csv", std::ios::binary);
        csv << "model,tumor_type,tile_accuracy_percent\n";
        csv.precision(17);
        text << "Tile accuracy by tumor type (%)\n";
        for (const std::string& backbone : backbones) {
            std::map<TaskName, double> acc;
            for (TaskName task : kBinaryTasks)
                if (const LoadedRun* run = find_run(task, backbone))
                    acc[task] = run->metrics->accuracy;
            if (acc.size() != kBinaryTasks.size()) {
                text << backbone << ": missing binary runs, aggregate skipped\n";
                continue;
            }
            auto agg = tumor_type_aggregate(acc);
            for (auto label : {ClassLabel::NT, ClassLabel::NCT, ClassLabel::VT}) {
                csv << backbone << "," << label_name(label) << "," << agg[label] * 100.0
                    << "\n";
                text << backbone << "  " << label_name(label) << "  " << pct(agg[label])
                     << "\n";
            }
        }
        text << "\n";
    }

    // (d) plots: accuracy bars and ROC overlays (best effort)
    try {
        std::vector<std::string> task_labels;
        std::vector<std::string> model_labels(backbones.begin(), backbones.end());
        std::vector<std::vector<double>> values;
        for (TaskName task : tasks) {
            task_labels.push_back(task_name_str(task));
            std::vector<double> row;
            for (const std::string& backbone : model_labels) {
                const LoadedRun* run = find_run(task, backbone);
                row.push_back(run ? run->metrics->accuracy : 0.0);
            }
            values.push_back(std::move(row));
        }
        write_bar_chart_svg(report_dir / "plots" / "accuracy.svg", "Test accuracy",
                            task_labels, model_labels, values);

        for (TaskName task : kBinaryTasks) {
            if (!tasks.count(task))
                continue;
            std::vector<PlotSeries> series;
            for (const std::string& backbone : model_labels) {
                const LoadedRun* run = find_run(task, backbone);
                if (!run || !fs::exists(run->dir / "roc.csv"))
                    continue;
                RocCurve curve = load_roc_csv(run->dir / "roc.csv");
                series.push_back({backbone + " (AUC " + two_dp(curve.auc) + ")", curve.fpr,
                                  curve.tpr});
            }
            if (!series.empty())
                write_roc_svg(report_dir / "plots" / ("roc_" + task_name_str(task) + ".svg"),
                              task_name_str(task), series);
        }
    } catch (const std::exception& e) {
        log << "plot rendering unavailable (" << e.what() << "), CSV output only\n";
    }

    if (!incomplete.empty()) {
        text << "Runs without evaluation artifacts:\n";
        for (const std::string& rid : incomplete) {
            text << "  " << rid << "\n";
            log << "missing metrics for run " << rid << "\n";
        }
    }
    log << "report written to " << report_dir.string() << "\n";
    return 0;
}

int cmd_inspect(const fs::path& results_dir, const std::string& run_id, std::ostream& log) {
    const fs::path run_dir = results_dir / run_id;
    if (!fs::exists(run_dir / "run.json"))
        throw ConfigurationError("no run named \"" + run_id + "\" under " +
                                 results_dir.string());
    TrainRunRecord record = load_run_record(run_dir);
    log << "run_id:       " << record.run_id << "\n";
    log << "task:         " << task_name_str(record.task) << "\n";
    log << "backbone:     " << backbone_name(record.model_config.backbone) << "\n";
    log << "stop_reason:  " << stop_reason_str(record.stop_reason) << "\n";
    log << "epochs:       " << record.epoch_history.size() << "\n";
    if (!record.epoch_history.empty()) {
        log << "best_epoch:   " << record.best_epoch << "\n";
        double best_acc = 0.0;
        for (const EpochStats& e : record.epoch_history)
            best_acc = std::max(best_acc, e.val_acc);
        log << "best_val_acc: " << two_dp(best_acc) << "\n";
    }
    if (record.stop_reason == StopReason::error)
        log << "error:        " << record.error_message << " (epoch " << record.error_epoch
            << ")\n";
    log << "wall_clock:   " << two_dp(record.wall_clock_seconds) << "s\n";
    if (fs::exists(run_dir / "metrics.json")) {
        MetricReport m = load_metrics_json(run_dir / "metrics.json");
        log << "test_accuracy: " << two_dp(m.accuracy) << "\n";
        log << "weighted_f1:   " << two_dp(m.weighted_f1) << "\n";
    }
    if (!record.checkpoint_path.empty())
        log << "checkpoint:   " << record.checkpoint_path << "\n";
    return 0;
}

} // namespace histo
