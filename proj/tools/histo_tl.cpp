// histo-tl: transfer-learning workbench for the osteosarcoma tile corpus.
// Verbs: prepare (manifest + split), run (train/evaluate the task x backbone
// matrix), report (comparison tables + plots), inspect <run_id>.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "histo/errors.hpp"
#include "histo/experiment.hpp"

using namespace histo;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string results_dir;
    long long seed = -1;
    bool force = false;
    int parallel = 1;
    std::string task_filter;
    std::string model_filter;
};

std::filesystem::path resolve_results_dir(const GlobalArgs& args,
                                          const ExperimentPlan* plan) {
    if (!args.results_dir.empty())
        return args.results_dir;
    if (plan && !plan->results_dir.empty())
        return plan->results_dir;
    if (const char* env = std::getenv("HISTO_TL_RESULTS"))
        return env;
    return "results";
}

ExperimentPlan load_plan(const GlobalArgs& args) {
    if (args.config_path.empty())
        throw ConfigurationError("this command needs --config <file>");
    ExperimentPlan plan = ExperimentPlan::from_ini_file(args.config_path);
    if (args.seed >= 0) {
        plan.split_seed = std::uint64_t(args.seed);
        plan.train.seed = std::uint64_t(args.seed);
        plan.augment.rng_seed = std::uint64_t(args.seed);
    }
    plan.results_dir = resolve_results_dir(args, &plan);
    return plan;
}

RunFilters make_filters(const GlobalArgs& args) {
    RunFilters filters;
    filters.force = args.force;
    filters.parallel = args.parallel;
    auto split_csv = [](const std::string& list) {
        std::vector<std::string> out;
        std::string item;
        std::stringstream ss(list);
        while (std::getline(ss, item, ','))
            if (!item.empty())
                out.push_back(item);
        return out;
    };
    for (const std::string& name : split_csv(args.task_filter)) {
        auto t = try_parse_task_name(name);
        if (!t)
            throw ConfigurationError("unknown task in --task: \"" + name + "\"");
        filters.tasks.push_back(*t);
    }
    for (const std::string& name : split_csv(args.model_filter))
        filters.backbones.push_back(parse_backbone(name));
    return filters;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"osteosarcoma tile classification workbench"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "experiment config file (INI)");
    app.add_option("--results-dir", args.results_dir,
                   "results directory (overrides config and HISTO_TL_RESULTS)");
    app.add_option("--seed", args.seed, "override split/train seed");
    app.add_flag("--force", args.force, "retrain completed runs");
    app.add_option("--parallel", args.parallel, "concurrent runs for `run`")
        ->check(CLI::PositiveNumber);

    auto* prepare = app.add_subcommand("prepare", "ingest the dataset and write the split");
    auto* run = app.add_subcommand("run", "train and evaluate the experiment matrix");
    run->add_option("--task", args.task_filter, "comma-separated task filter");
    run->add_option("--model", args.model_filter, "comma-separated backbone filter");
    auto* report = app.add_subcommand("report", "render comparison tables and plots");
    std::string inspect_run_id;
    auto* inspect = app.add_subcommand("inspect", "summarize one run");
    inspect->add_option("run_id", inspect_run_id, "run to summarize")->required();
    // Global flags are accepted on either side of the verb.
    for (CLI::App* sub : {prepare, run, report, inspect})
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed())
            return cmd_prepare(load_plan(args), std::cout);
        if (run->parsed())
            return cmd_run(load_plan(args), make_filters(args), std::cout);
        if (report->parsed()) {
            ExperimentPlan plan;
            const ExperimentPlan* plan_ptr = nullptr;
            if (!args.config_path.empty()) {
                plan = ExperimentPlan::from_ini_file(args.config_path);
                plan_ptr = &plan;
            }
            return cmd_report(resolve_results_dir(args, plan_ptr), std::cout);
        }
        if (inspect->parsed()) {
            ExperimentPlan plan;
            const ExperimentPlan* plan_ptr = nullptr;
            if (!args.config_path.empty()) {
                plan = ExperimentPlan::from_ini_file(args.config_path);
                plan_ptr = &plan;
            }
            return cmd_inspect(resolve_results_dir(args, plan_ptr), inspect_run_id,
                               std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
