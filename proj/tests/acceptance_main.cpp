// Acceptance suite: one line per criterion, nonzero exit if any binding
// criterion (1-6) fails. Criterion 7 (full-scale reproduction) needs the
// real dataset and is reported as SKIP unless HISTO_TL_DATASET is set; its
// failure alone does not fail the suite.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "histo/errors.hpp"
#include "histo/experiment.hpp"
#include "histo/manifest.hpp"
#include "histo/metrics.hpp"
#include "histo/model_zoo.hpp"
#include "histo/nn/adam.hpp"
#include "histo/trainer.hpp"
#include "support/fixtures.hpp"

using namespace histo;

namespace {

struct Check {
    std::vector<std::string> failures;
    void expect(bool ok, const std::string& what) {
        if (!ok)
            failures.push_back(what);
    }
};

struct Criterion {
    int id;
    std::string name;
    double time_limit_s; // 0 = no limit
    bool binding;
    std::function<void(Check&)> fn;
};

// ---- criterion 1: metrics oracle equivalence ----

void metrics_oracle_equivalence(Check& check) {
    std::mt19937_64 rng(20260808);
    for (int iter = 0; iter < 1000; ++iter) {
        const int n = 1 + int(rng() % 5);
        ConfusionMatrix cm;
        cm.n_classes = n;
        cm.counts.resize(std::size_t(n) * n);
        for (auto& c : cm.counts)
            c = std::int64_t(rng() % 51);
        for (int c = 0; c < n; ++c)
            cm.class_names.push_back("c" + std::to_string(c));
        MetricReport rep = report(cm);

        // Brute-force definitional recomputation from integer counts.
        std::int64_t total = 0, diag = 0;
        std::vector<std::int64_t> row(std::size_t(n), 0), col(std::size_t(n), 0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                row[std::size_t(i)] += cm.at(i, j);
                col[std::size_t(j)] += cm.at(i, j);
                total += cm.at(i, j);
            }
        double wp = 0, wr = 0, wf = 0;
        for (int c = 0; c < n; ++c) {
            diag += cm.at(c, c);
            const double p =
                col[std::size_t(c)] ? double(cm.at(c, c)) / double(col[std::size_t(c)]) : 0.0;
            const double r =
                row[std::size_t(c)] ? double(cm.at(c, c)) / double(row[std::size_t(c)]) : 0.0;
            const double f = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
            check.expect(std::abs(rep.per_class[std::size_t(c)].precision - p) < 1e-12,
                         "precision mismatch");
            check.expect(std::abs(rep.per_class[std::size_t(c)].recall - r) < 1e-12,
                         "recall mismatch");
            check.expect(std::abs(rep.per_class[std::size_t(c)].f1 - f) < 1e-12,
                         "f1 mismatch");
            if (total) {
                wp += p * double(row[std::size_t(c)]) / double(total);
                wr += r * double(row[std::size_t(c)]) / double(total);
                wf += f * double(row[std::size_t(c)]) / double(total);
            }
        }
        const double acc = total ? double(diag) / double(total) : 0.0;
        check.expect(std::abs(rep.weighted_precision - wp) < 1e-12, "weighted precision");
        check.expect(std::abs(rep.weighted_recall - wr) < 1e-12, "weighted recall");
        check.expect(std::abs(rep.weighted_f1 - wf) < 1e-12, "weighted f1");
        check.expect(std::abs(rep.accuracy - acc) < 1e-12, "accuracy");
        if (!check.failures.empty())
            return;
    }
}

// ---- criterion 2: AUC duality ----

void auc_duality(Check& check) {
    {
        const double scores[] = {0.1, 0.4, 0.35, 0.8};
        const int labels[] = {0, 0, 1, 1};
        const RocCurve curve = roc(scores, labels, 1);
        check.expect(curve.auc == 0.75, "worked example must be exactly 0.75, got " +
                                            std::to_string(curve.auc));
    }
    std::mt19937_64 rng(424242);
    for (int iter = 0; iter < 500; ++iter) {
        const std::size_t n = 2 + rng() % 199;
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        const int levels = 2 + int(rng() % 16); // quantized -> ties
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = double(rng() % std::uint64_t(levels)) / double(levels - 1);
            labels[i] = int(rng() % 2);
        }
        labels[0] = 0;
        labels[n - 1] = 1;
        const RocCurve curve = roc(scores, labels, 1);

        double wins = 0;
        std::int64_t pairs = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] != 1)
                continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (labels[j] == 1)
                    continue;
                ++pairs;
                if (scores[i] > scores[j])
                    wins += 1.0;
                else if (scores[i] == scores[j])
                    wins += 0.5;
            }
        }
        check.expect(std::abs(curve.auc - wins / double(pairs)) < 1e-9,
                     "trapezoidal AUC != rank statistic");
        if (!check.failures.empty())
            return;
    }
}

// ---- criterion 3: split arithmetic ----

void split_arithmetic(Check& check) {
    auto manifest = histo::testing::synthetic_manifest(536, 263, 345);
    check.expect(manifest.total() == 1144, "canonical manifest size");
    auto split = split_dataset(manifest, {0.7, 0.1, 0.2}, 42);
    const auto sizes = split.partition_sizes();
    check.expect(sizes[0] == 800, "train partition must be 800, got " +
                                      std::to_string(sizes[0]));
    check.expect(sizes[1] == 114, "val partition must be 114, got " + std::to_string(sizes[1]));
    check.expect(sizes[2] == 230, "test partition must be 230, got " +
                                      std::to_string(sizes[2]));

    histo::testing::TempDir tmp("acceptance_split");
    save_split_json(split, tmp.path / "a.json");
    auto again = split_dataset(manifest, {0.7, 0.1, 0.2}, 42);
    save_split_json(again, tmp.path / "b.json");
    std::ifstream fa(tmp.path / "a.json", std::ios::binary), fb(tmp.path / "b.json",
                                                                std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    check.expect(sa.str() == sb.str() && !sa.str().empty(),
                 "same seed must give byte-identical split.json");
}

// ---- criterion 4: architecture audit ----

void architecture_audit(Check& check) {
    ModelConfig cfg;
    cfg.backbone = Backbone::VGG19;
    cfg.n_classes = 3;
    cfg.init_seed = 17;
    ModelHandle model = build_model(cfg);
    check.expect(model.feature_dim() == 61952,
                 "flatten length must be 61952, got " + std::to_string(model.feature_dim()));
    check.expect(model.graph().output_shape(model.softmax_node())[1] == 3,
                 "three-class head arity");

    ModelConfig cfg2 = cfg;
    cfg2.n_classes = 2;
    ModelHandle binary = build_model(cfg2);
    check.expect(binary.graph().output_shape(binary.softmax_node())[1] == 2,
                 "two-class head arity");

    nn::Tensor batch({2, 375, 375, 3});
    std::mt19937_64 rng(3);
    for (float& v : batch.data)
        v = float((rng() >> 11) * 0x1.0p-53);
    nn::Tensor probs = model.predict_probs(batch);
    for (int r = 0; r < 2; ++r) {
        float sum = 0.0f;
        for (int c = 0; c < 3; ++c)
            sum += probs.data[std::size_t(r) * 3 + c];
        check.expect(std::abs(sum - 1.0f) < 1e-5f, "softmax row must sum to 1 within 1e-5");
    }

    auto before = snapshot_params(model.backbone_params());
    nn::Tensor train_probs = model.train_forward(batch, &rng);
    nn::Tensor dlogits(train_probs.shape);
    const int targets[2] = {0, 2};
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c)
            dlogits.data[std::size_t(b) * 3 + c] =
                (train_probs.data[std::size_t(b) * 3 + c] - (c == targets[b] ? 1.0f : 0.0f)) /
                2.0f;
    nn::Adam adam(model.graph().trainable_params(), {.learning_rate = 0.01});
    adam.zero_grad();
    model.train_backward(dlogits);
    adam.step();
    check.expect(before == snapshot_params(model.backbone_params()),
                 "frozen backbone weights must stay bit-identical through an optimizer step");
}

// ---- criterion 5: trainer contract ----

void trainer_contract(Check& check) {
    histo::testing::TempDir tmp("acceptance_trainer");
    const std::array<std::array<std::uint8_t, 3>, 3> colors = {{
        {235, 45, 45},
        {45, 235, 45},
        {45, 45, 235},
    }};
    auto make_items = [&](int per_class) {
        std::vector<std::pair<std::filesystem::path, int>> items;
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < per_class; ++i) {
                auto path = tmp.path / ("t" + std::to_string(c) + "_" + std::to_string(i) +
                                        ".png");
                histo::write_png(path,
                                 histo::testing::constant_image(16, 16,
                                                                colors[std::size_t(c)]));
                items.emplace_back(path, c);
            }
        return items;
    };

    ModelConfig mc;
    mc.backbone = Backbone::VGG19;
    mc.n_classes = 3;
    mc.init_seed = 23;
    const TaskSpec task = TaskSpec::get(TaskName::MULTICLASS);
    const AugmentConfig aug = AugmentConfig::identity(31);

    { // early_stop threshold 0.0 stops after exactly one epoch
        auto items = make_items(2);
        ModelHandle model = build_model(mc);
        TrainConfig cfg;
        cfg.batch_sizes = {6, 6, 6};
        cfg.early_stop_val_acc = 0.0;
        cfg.max_epochs = 10;
        cfg.seed = 4;
        BatchStream train_stream(items, cfg.batch_sizes.train, BatchStream::Mode::train, aug);
        BatchStream val_stream(items, cfg.batch_sizes.val, BatchStream::Mode::eval, aug);
        auto rec = train(model, train_stream, val_stream, cfg, task, "early", "");
        check.expect(rec.epoch_history.size() == 1,
                     "zero threshold must stop after 1 epoch, ran " +
                         std::to_string(rec.epoch_history.size()));
        check.expect(rec.stop_reason == StopReason::early_stop,
                     "stop_reason must be early_stop");

        // max_epochs bound with an unreachable threshold, same features.
        // This run exercises the alternative 0.001 learning rate; the other
        // smoke runs use the default 0.01.
        ModelHandle model2 = build_model(mc);
        cfg.early_stop_val_acc = 1.0;
        cfg.learning_rate = 0.001;
        cfg.max_epochs = 3;
        BatchStream train2(items, cfg.batch_sizes.train, BatchStream::Mode::train, aug);
        BatchStream val2(items, cfg.batch_sizes.val, BatchStream::Mode::eval, aug);
        auto rec2 = train(model2, train2, val2, cfg, task, "bounded", "");
        check.expect(rec2.epoch_history.size() == 3,
                     "max_epochs=3 must give exactly 3 history rows, got " +
                         std::to_string(rec2.epoch_history.size()));
        check.expect(rec2.stop_reason == StopReason::max_epochs,
                     "stop_reason must be max_epochs");
        for (std::size_t e = 0; e < rec2.epoch_history.size(); ++e)
            check.expect(rec2.epoch_history[e].epoch == int(e) + 1,
                         "epoch indices must increase from 1");
    }

    { // overfit smoke: 30 constant-color images, three classes
        auto items = make_items(10);
        ModelHandle model = build_model(mc);
        TrainConfig cfg;
        cfg.batch_sizes = {10, 30, 30};
        cfg.max_epochs = 200;
        // Unreachable threshold: the validation set here is the training
        // tiles, which a converging head classifies perfectly long before
        // dropout-active train accuracy crosses 0.95; an early stop would
        // truncate the history this criterion inspects.
        cfg.early_stop_val_acc = 1.0;
        cfg.learning_rate = 0.01;
        cfg.seed = 9;
        BatchStream train_stream(items, cfg.batch_sizes.train, BatchStream::Mode::train, aug);
        BatchStream val_stream(items, cfg.batch_sizes.val, BatchStream::Mode::eval, aug);
        auto rec = train(model, train_stream, val_stream, cfg, task, "overfit", "");
        check.expect(!rec.epoch_history.empty(), "overfit run produced no history");
        double best_train_acc = 0.0;
        for (const EpochStats& e : rec.epoch_history)
            best_train_acc = std::max(best_train_acc, e.train_acc);
        check.expect(best_train_acc >= 0.95,
                     "train accuracy must reach 0.95 within 200 epochs, best " +
                         std::to_string(best_train_acc));
        check.expect(rec.epoch_history.back().train_loss <
                         rec.epoch_history.front().train_loss,
                     "final train loss must undercut the first epoch");
    }
}

// ---- criterion 6: aggregation formula ----

void aggregation_formula(Check& check) {
    const std::map<TaskName, double> fixture = {
        {TaskName::NT_vs_REST, 0.9},
        {TaskName::NCT_vs_NT, 0.8},
        {TaskName::VT_vs_NT, 1.0},
        {TaskName::NCT_vs_VT, 0.6},
    };
    auto agg = tumor_type_aggregate(fixture);
    check.expect(agg[ClassLabel::NT] == 0.9, "NT aggregate must be exactly 0.9");
    check.expect(std::abs(agg[ClassLabel::NCT] - 0.7) < 1e-15, "NCT aggregate must be 0.7");
    check.expect(agg[ClassLabel::VT] == 0.8, "VT aggregate must be exactly 0.8");

    const std::map<TaskName, double> equal = {
        {TaskName::NT_vs_REST, 0.77},
        {TaskName::NCT_vs_NT, 0.77},
        {TaskName::VT_vs_NT, 0.77},
        {TaskName::NCT_vs_VT, 0.77},
    };
    auto same = tumor_type_aggregate(equal);
    for (auto [label, value] : same)
        check.expect(std::abs(value - 0.77) < 1e-15, "equal inputs must map to equal outputs");
}

// ---- criterion 7: optional full-scale reproduction ----

void full_scale_reproduction(Check& check) {
    const char* dataset = std::getenv("HISTO_TL_DATASET");
    ExperimentPlan plan;
    plan.dataset_root = dataset;
    plan.layout = std::filesystem::exists(std::filesystem::path(dataset) / "manifest.csv")
                      ? ManifestLayout::csv_manifest
                      : ManifestLayout::folder_per_class;
    if (plan.layout == ManifestLayout::csv_manifest)
        plan.dataset_root = std::filesystem::path(dataset) / "manifest.csv";
    plan.backbones = {Backbone::VGG19};
    if (const char* weights = std::getenv("HISTO_TL_WEIGHTS"))
        plan.weights_dir = weights;
    plan.results_dir = std::filesystem::path(
        std::getenv("HISTO_TL_RESULTS") ? std::getenv("HISTO_TL_RESULTS") : "results_full");

    std::ostringstream log;
    cmd_prepare(plan, log);
    cmd_run(plan, {}, log);

    auto metrics_of = [&](TaskName task) {
        return load_metrics_json(plan.results_dir / run_id_for(task, Backbone::VGG19,
                                                               plan.train.seed) /
                                 "metrics.json");
    };
    const double multi_acc = metrics_of(TaskName::MULTICLASS).accuracy;
    check.expect(multi_acc >= 0.90, "multiclass accuracy must reach 0.90, got " +
                                        std::to_string(multi_acc));
    const std::map<TaskName, double> floors = {
        {TaskName::NT_vs_REST, 0.95 - 0.05},
        {TaskName::NCT_vs_NT, 0.96 - 0.05},
        {TaskName::VT_vs_NT, 0.96 - 0.05},
        {TaskName::NCT_vs_VT, 0.92 - 0.05},
    };
    for (auto [task, floor] : floors) {
        RocCurve curve = load_roc_csv(plan.results_dir /
                                      run_id_for(task, Backbone::VGG19, plan.train.seed) /
                                      "roc.csv");
        check.expect(curve.auc >= floor, task_name_str(task) + " AUC " +
                                             std::to_string(curve.auc) + " below floor " +
                                             std::to_string(floor));
    }
}

} // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "metrics-oracle-equivalence", 10.0, true, metrics_oracle_equivalence},
        {2, "auc-duality", 10.0, true, auc_duality},
        {3, "split-arithmetic", 1.0, true, split_arithmetic},
        {4, "architecture-audit", 120.0, true, architecture_audit},
        {5, "trainer-contract", 900.0, true, trainer_contract},
        {6, "aggregation-formula", 0.0, true, aggregation_formula},
        {7, "full-scale-reproduction", 0.0, false, full_scale_reproduction},
    };

    bool binding_failure = false;
    for (const Criterion& criterion : criteria) {
        std::string label = "[" + std::to_string(criterion.id) + "] " + criterion.name + " ";
        label.resize(44, '.');

        if (criterion.id == 7 && !std::getenv("HISTO_TL_DATASET")) {
            std::printf("%s SKIP (set HISTO_TL_DATASET to enable)\n", label.c_str());
            continue;
        }

        Check check;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criterion.fn(check);
        } catch (const std::exception& e) {
            check.failures.push_back(std::string("exception: ") + e.what());
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (criterion.time_limit_s > 0.0 && elapsed > criterion.time_limit_s)
            check.failures.push_back("runtime " + std::to_string(elapsed) + "s exceeds " +
                                     std::to_string(criterion.time_limit_s) + "s budget");

        if (check.failures.empty()) {
            std::printf("%s PASS (%.2fs)\n", label.c_str(), elapsed);
        } else {
            std::printf("%s FAIL (%.2fs)\n", label.c_str(), elapsed);
            for (const std::string& why : check.failures)
                std::printf("      - %s\n", why.c_str());
            if (criterion.binding)
                binding_failure = true;
            else
                std::printf("      (non-binding criterion; suite result unaffected)\n");
        }
    }
    return binding_failure ? 1 : 0;
}
