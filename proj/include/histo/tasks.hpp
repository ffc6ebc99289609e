#ifndef HISTO_TASKS_HPP
#define HISTO_TASKS_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "histo/labels.hpp"

namespace histo {

enum class TaskName {
    NT_vs_REST,
    NCT_vs_NT,
    VT_vs_NT,
    NCT_vs_VT,
    MULTICLASS,
};

inline constexpr std::array<TaskName, 5> kAllTasks = {
    TaskName::NT_vs_REST, TaskName::NCT_vs_NT, TaskName::VT_vs_NT,
    TaskName::NCT_vs_VT,  TaskName::MULTICLASS,
};

inline constexpr std::array<TaskName, 4> kBinaryTasks = {
    TaskName::NT_vs_REST,
    TaskName::NCT_vs_NT,
    TaskName::VT_vs_NT,
    TaskName::NCT_vs_VT,
};

// One of the five classification tasks. label_map sends each tissue class to
// a task-class index or to nothing (tile dropped for that task).
struct TaskSpec {
    TaskName name;
    std::array<std::optional<int>, kNumClasses> label_map; // indexed by ClassLabel
    int n_classes = 2;
    // Task-class index scored as "positive" in ROC curves (binary tasks).
    // Defaults to index 1, the second-listed class of the mapping.
    int positive_class = 1;

    std::optional<int> map(ClassLabel label) const {
        return label_map[static_cast<int>(label)];
    }

    bool is_binary() const { return n_classes == 2; }

    // Display name of a task-class index, e.g. "NCT+VT" for the pooled
    // tumor class of NT_vs_REST.
    std::string class_name(int task_class) const;
    std::vector<std::string> class_names() const;

    static TaskSpec get(TaskName name);
    static TaskSpec parse(const std::string& name); // throws ConfigurationError
};

std::string task_name_str(TaskName name);
std::optional<TaskName> try_parse_task_name(const std::string& text);

} // namespace histo

#endif
