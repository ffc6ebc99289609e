#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "histo/errors.hpp"
#include "histo/experiment.hpp"
#include "histo/metrics.hpp"
#include "support/fixtures.hpp"

using namespace histo;
using histo::testing::TempDir;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// folder-per-class dataset with enough tiles that every task keeps all
// three partitions populated
void write_tiny_dataset(const fs::path& root, int per_class = 10) {
    const std::array<std::array<std::uint8_t, 3>, 3> colors = {{
        {220, 60, 60},
        {60, 220, 60},
        {60, 60, 220},
    }};
    for (ClassLabel label : kAllClasses) {
        fs::create_directories(root / label_name(label));
        for (int i = 0; i < per_class; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "%s_%03d.png", label_name(label).c_str(), i);
            histo::write_png(root / label_name(label) / name,
                             histo::testing::constant_image(12, 12,
                                                            colors[std::size_t(label)]));
        }
    }
}

ExperimentPlan tiny_plan(const fs::path& dataset, const fs::path& results) {
    ExperimentPlan plan;
    plan.dataset_root = dataset;
    plan.layout = ManifestLayout::folder_per_class;
    plan.results_dir = results;
    plan.backbones = {Backbone::ResNet50};
    plan.train.max_epochs = 1;
    plan.train.batch_sizes = {8, 4, 4};
    plan.train.seed = 42;
    plan.augment = AugmentConfig::identity(42);
    return plan;
}

int run_tool(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string(HISTO_TL_BIN) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[512];
    while (std::fgets(buf, sizeof(buf), pipe))
        out += buf;
    const int status = pclose(pipe);
    if (output)
        *output = out;
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("ini parsing and plan round trip") {
    const std::string text = R"(# experiment settings
[dataset]
root = data/osteo
layout = folder_per_class

[split]
ratios = 0.7, 0.1, 0.2
seed = 7

[tasks]
names = MULTICLASS, NCT_vs_VT

[models]
backbones = VGG19
dropout_rate = 0.4

[train]
learning_rate = 0.001
max_epochs = 12

[output]
results_dir = out
)";
    auto plan = ExperimentPlan::from_ini(IniDoc::parse(text));
    CHECK(plan.dataset_root == "data/osteo");
    CHECK(plan.layout == ManifestLayout::folder_per_class);
    CHECK(plan.split_seed == 7);
    CHECK(plan.tasks == std::vector<TaskName>{TaskName::MULTICLASS, TaskName::NCT_vs_VT});
    CHECK(plan.backbones == std::vector<Backbone>{Backbone::VGG19});
    CHECK(plan.dropout_rate == 0.4);
    CHECK(plan.train.learning_rate == 0.001);
    CHECK(plan.train.max_epochs == 12);
    CHECK(plan.train.batch_sizes.train == 80); // untouched defaults
    CHECK(plan.results_dir == "out");

    // parse -> serialize -> parse is a fixed point
    const std::string ini1 = plan.to_ini();
    auto plan2 = ExperimentPlan::from_ini(IniDoc::parse(ini1));
    CHECK(plan2.to_ini() == ini1);

    CHECK_THROWS_AS(ExperimentPlan::from_ini(IniDoc::parse("[tasks]\nnames = NOPE\n")),
                    ConfigurationError);
    CHECK_THROWS_AS(IniDoc::parse("key_without_section"), ConfigurationError);
}

TEST_CASE("run ids follow the task__backbone__seed pattern") {
    CHECK(run_id_for(TaskName::MULTICLASS, Backbone::VGG19, 42) == "MULTICLASS__VGG19__seed42");
    CHECK(run_id_for(TaskName::NCT_vs_VT, Backbone::InceptionV3, 7) ==
          "NCT_vs_VT__InceptionV3__seed7");
}

TEST_CASE("prepare writes manifest and a byte-stable split") {
    TempDir tmp("cli_prepare");
    write_tiny_dataset(tmp.path / "data");
    auto plan = tiny_plan(tmp.path / "data", tmp.path / "results");

    std::ostringstream log;
    CHECK(cmd_prepare(plan, log) == 0);
    CHECK(fs::exists(plan.results_dir / "manifest.csv"));
    CHECK(fs::exists(plan.results_dir / "split.json"));
    CHECK(log.str().find("30 tiles") != std::string::npos);
    CHECK(log.str().find("NT 10") != std::string::npos);

    const std::string first = slurp(plan.results_dir / "split.json");
    std::ostringstream log2;
    CHECK(cmd_prepare(plan, log2) == 0);
    CHECK(slurp(plan.results_dir / "split.json") == first);

    SUBCASE("missing dataset root fails loudly") {
        auto bad = tiny_plan(tmp.path / "nowhere", tmp.path / "results2");
        std::ostringstream sink;
        CHECK_THROWS_AS(cmd_prepare(bad, sink), IngestionError);
    }
}

TEST_CASE("run executes the filtered matrix and is idempotent") {
    TempDir tmp("cli_run");
    write_tiny_dataset(tmp.path / "data");
    auto plan = tiny_plan(tmp.path / "data", tmp.path / "results");
    std::ostringstream prep_log;
    cmd_prepare(plan, prep_log);

    RunFilters filters;
    filters.tasks = {TaskName::MULTICLASS, TaskName::NCT_vs_VT};
    std::ostringstream log;
    CHECK(cmd_run(plan, filters, log) == 0);

    const fs::path multi = plan.results_dir / "MULTICLASS__ResNet50__seed42";
    const fs::path binary = plan.results_dir / "NCT_vs_VT__ResNet50__seed42";
    for (const fs::path& dir : {multi, binary}) {
        CHECK(fs::exists(dir / "run.json"));
        CHECK(fs::exists(dir / "history.csv"));
        CHECK(fs::exists(dir / "metrics.json"));
        CHECK(fs::exists(dir / "confusion.csv"));
        CHECK(fs::exists(dir / "model.ckpt"));
    }
    // ROC artifacts only for the binary task.
    CHECK(!fs::exists(multi / "roc.csv"));
    CHECK(fs::exists(binary / "roc.csv"));
    CHECK(fs::exists(binary / "plots" / "roc.svg"));
    CHECK(slurp(binary / "plots" / "roc.svg").find("<svg") == 0);

    // run.json carries the embedded configs.
    auto record = load_run_record(multi);
    CHECK(record.task == TaskName::MULTICLASS);
    CHECK(record.model_config.backbone == Backbone::ResNet50);
    CHECK(record.train_config.max_epochs == 1);
    CHECK(record.epoch_history.size() == 1);

    // Rerun without force skips completed runs, also through the
    // parallel job pool.
    {
        const auto stamp = fs::last_write_time(multi / "run.json");
        std::ostringstream log2;
        CHECK(cmd_run(plan, filters, log2) == 0);
        CHECK(log2.str().find("skipping") != std::string::npos);
        CHECK(fs::last_write_time(multi / "run.json") == stamp);

        RunFilters pooled = filters;
        pooled.parallel = 4;
        std::ostringstream log3;
        CHECK(cmd_run(plan, pooled, log3) == 0);
        CHECK(fs::last_write_time(multi / "run.json") == stamp);
    }

    // Report renders tables and plots from the stored artifacts.
    {
        std::ostringstream rep_log;
        CHECK(cmd_report(plan.results_dir, rep_log) == 0);
        const fs::path report = plan.results_dir / "report";
        CHECK(fs::exists(report / "multiclass_comparison.csv"));
        CHECK(fs::exists(report / "per_class_metrics.csv"));
        CHECK(fs::exists(report / "report.txt"));
        CHECK(fs::exists(report / "plots" / "accuracy.svg"));
        // Numbers in the table match metrics.json exactly (no recompute).
        auto metrics = load_metrics_json(multi / "metrics.json");
        const std::string csv = slurp(report / "multiclass_comparison.csv");
        std::ostringstream want;
        want.precision(17);
        want << metrics.accuracy;
        CHECK(csv.find(want.str()) != std::string::npos);
        // Aggregate needs all four binary tasks; with only one it is skipped.
        CHECK(slurp(report / "report.txt").find("aggregate skipped") != std::string::npos);
    }

    // Inspect summarizes a run.
    {
        std::ostringstream ins_log;
        CHECK(cmd_inspect(plan.results_dir, "MULTICLASS__ResNet50__seed42", ins_log) == 0);
        CHECK(ins_log.str().find("MULTICLASS") != std::string::npos);
        CHECK(ins_log.str().find("test_accuracy") != std::string::npos);
        std::ostringstream sink;
        CHECK_THROWS_AS(cmd_inspect(plan.results_dir, "NOT_A_RUN", sink),
                        ConfigurationError);
    }

    // Run without prepare is rejected.
    {
        auto plan2 = tiny_plan(tmp.path / "data", tmp.path / "fresh");
        std::ostringstream sink;
        CHECK_THROWS_AS(cmd_run(plan2, filters, sink), ConfigurationError);
    }
}

namespace {

// Fabricates a completed run directory without training.
void inject_run(const fs::path& results_dir, TaskName task, Backbone backbone,
                std::uint64_t seed, double accuracy) {
    const TaskSpec spec = TaskSpec::get(task);
    const std::string rid = run_id_for(task, backbone, seed);
    const fs::path dir = results_dir / rid;
    TrainRunRecord record;
    record.run_id = rid;
    record.task = task;
    record.model_config.backbone = backbone;
    record.model_config.n_classes = spec.n_classes;
    record.epoch_history.push_back({1, 0.5, 0.8, 0.6, 0.75});
    record.best_epoch = 1;
    record.stop_reason = StopReason::max_epochs;
    save_run_record(record, dir);

    // Synthetic confusion with the requested accuracy over 100 tiles.
    const int correct_0 = int(accuracy * 50);
    const int correct_1 = int(accuracy * 100) - correct_0;
    ConfusionMatrix cm;
    cm.n_classes = spec.n_classes;
    cm.counts.assign(std::size_t(spec.n_classes) * spec.n_classes, 0);
    cm.class_names = spec.class_names();
    cm.at(0, 0) = correct_0;
    cm.at(0, 1) = 50 - correct_0;
    cm.at(1, 1) = correct_1;
    cm.at(1, 0) = 50 - correct_1;
    MetricReport rep = report(cm);
    rep.class_names = cm.class_names;
    write_metrics_json(dir / "metrics.json", rep);
    write_confusion_csv(dir / "confusion.csv", cm);
}

} // namespace

TEST_CASE("report aggregates fixture-injected runs") {
    TempDir tmp("cli_report_fixture");
    const fs::path results = tmp.path / "results";
    // Accuracies chosen so the tumor-type aggregate is exactly NT 90%,
    // NCT 70%, VT 80%.
    inject_run(results, TaskName::NT_vs_REST, Backbone::VGG19, 1, 0.9);
    inject_run(results, TaskName::NCT_vs_NT, Backbone::VGG19, 1, 0.8);
    inject_run(results, TaskName::VT_vs_NT, Backbone::VGG19, 1, 1.0);
    inject_run(results, TaskName::NCT_vs_VT, Backbone::VGG19, 1, 0.6);
    inject_run(results, TaskName::MULTICLASS, Backbone::VGG19, 1, 0.9);
    // A second model with identical fixtures must produce identical rows.
    inject_run(results, TaskName::MULTICLASS, Backbone::InceptionV3, 1, 0.9);

    std::ostringstream log;
    CHECK(cmd_report(results, log) == 0);

    const std::string agg = slurp(results / "report" / "tumor_type_aggregate.csv");
    CHECK(agg.find("VGG19,NT,90") != std::string::npos);
    CHECK(agg.find("VGG19,NCT,70") != std::string::npos);
    CHECK(agg.find("VGG19,VT,80") != std::string::npos);

    // Identical fixtures -> identical numeric cells across models.
    std::istringstream multi(slurp(results / "report" / "multiclass_comparison.csv"));
    std::string header, row_incep, row_vgg;
    std::getline(multi, header);
    std::getline(multi, row_incep); // InceptionV3 sorts first
    std::getline(multi, row_vgg);
    CHECK(row_incep.substr(row_incep.find(',')) == row_vgg.substr(row_vgg.find(',')));

    // Missing cells are reported as missing, not invented.
    const std::string table = slurp(results / "report" / "multiclass_comparison.csv");
    CHECK(table.find("missing") == std::string::npos); // both models complete here
    inject_run(results, TaskName::MULTICLASS, Backbone::VGG16, 1, 0.5);
    fs::remove(results / "MULTICLASS__VGG16__seed1" / "metrics.json");
    std::ostringstream log2;
    CHECK(cmd_report(results, log2) == 0);
    CHECK(slurp(results / "report" / "multiclass_comparison.csv").find("VGG16,missing") !=
          std::string::npos);
    CHECK(log2.str().find("MULTICLASS__VGG16__seed1") != std::string::npos);
}

TEST_CASE("binary exit codes") {
    TempDir tmp("cli_binary");
    std::string out;

    // No dataset -> configuration/dataset error -> exit 2, message names the path.
    std::ofstream cfg(tmp.path / "bad.ini");
    cfg << "[dataset]\nroot = " << (tmp.path / "missing").string()
        << "\nlayout = folder_per_class\n[output]\nresults_dir = "
        << (tmp.path / "results").string() << "\n";
    cfg.close();
    CHECK(run_tool("prepare --config " + (tmp.path / "bad.ini").string(), &out) == 2);
    CHECK(out.find("missing") != std::string::npos);

    CHECK(run_tool("report --results-dir " + (tmp.path / "empty").string(), &out) == 2);

    CHECK(run_tool("--help", &out) == 0);
    CHECK(out.find("prepare") != std::string::npos);

    // HISTO_TL_RESULTS fallback is honored when neither the flag nor the
    // config names a results directory.
    write_tiny_dataset(tmp.path / "data", 4);
    std::ofstream cfg2(tmp.path / "ok.ini");
    cfg2 << "[dataset]\nroot = " << (tmp.path / "data").string()
         << "\nlayout = folder_per_class\n";
    cfg2.close();
    const std::string env_dir = (tmp.path / "env_results").string();
    const std::string cmd = "HISTO_TL_RESULTS=" + env_dir + " " + HISTO_TL_BIN +
                            " prepare --config " + (tmp.path / "ok.ini").string() +
                            " > /dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(fs::path(env_dir) / "split.json"));
}
