#ifndef HISTO_EXPERIMENT_HPP
#define HISTO_EXPERIMENT_HPP

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "histo/config.hpp"

namespace histo {

struct RunFilters {
    std::vector<TaskName> tasks;     // empty = every task in the plan
    std::vector<Backbone> backbones; // empty = every backbone in the plan
    bool force = false;
    int parallel = 1;
};

// Writes manifest.csv and split.json under the plan's results_dir and
// prints class counts and partition sizes. Throws on config/dataset errors.
int cmd_prepare(const ExperimentPlan& plan, std::ostream& log);

// Trains and evaluates every selected (task, backbone) cell. Completed
// run_ids are skipped unless filters.force. Individual failures are
// recorded and the matrix continues; returns 1 if any cell failed, else 0.
int cmd_run(const ExperimentPlan& plan, const RunFilters& filters, std::ostream& log);

// Renders comparison tables (CSV + text) and SVG plots from stored run
// artifacts only.
int cmd_report(const std::filesystem::path& results_dir, std::ostream& log);

int cmd_inspect(const std::filesystem::path& results_dir, const std::string& run_id,
                std::ostream& log);

} // namespace histo

#endif
