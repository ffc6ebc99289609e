#include "histo/tasks.hpp"

#include "histo/errors.hpp"

namespace histo {

std::string task_name_str(TaskName name) {
    switch (name) {
    case TaskName::NT_vs_REST: return "NT_vs_REST";
    case TaskName::NCT_vs_NT: return "NCT_vs_NT";
    case TaskName::VT_vs_NT: return "VT_vs_NT";
    case TaskName::NCT_vs_VT: return "NCT_vs_VT";
    case TaskName::MULTICLASS: return "MULTICLASS";
    }
    return "?";
}

std::optional<TaskName> try_parse_task_name(const std::string& text) {
    for (TaskName t : kAllTasks)
        if (task_name_str(t) == text)
            return t;
    return std::nullopt;
}

TaskSpec TaskSpec::get(TaskName name) {
    TaskSpec spec;
    spec.name = name;
    auto& m = spec.label_map;
    switch (name) {
    case TaskName::NT_vs_REST:
        // NT -> 0, tumor (NCT or VT) -> 1; nothing dropped.
        m[static_cast<int>(ClassLabel::NT)] = 0;
        m[static_cast<int>(ClassLabel::NCT)] = 1;
        m[static_cast<int>(ClassLabel::VT)] = 1;
        spec.n_classes = 2;
        break;
    case TaskName::NCT_vs_NT:
        m[static_cast<int>(ClassLabel::NCT)] = 0;
        m[static_cast<int>(ClassLabel::NT)] = 1;
        spec.n_classes = 2;
        break;
    case TaskName::VT_vs_NT:
        m[static_cast<int>(ClassLabel::NT)] = 0;
        m[static_cast<int>(ClassLabel::VT)] = 1;
        spec.n_classes = 2;
        break;
    case TaskName::NCT_vs_VT:
        m[static_cast<int>(ClassLabel::NCT)] = 0;
        m[static_cast<int>(ClassLabel::VT)] = 1;
        spec.n_classes = 2;
        break;
    case TaskName::MULTICLASS:
        for (ClassLabel c : kAllClasses)
            m[static_cast<int>(c)] = static_cast<int>(c);
        spec.n_classes = 3;
        spec.positive_class = -1; // ROC not defined for the 3-class task
        break;
    }
    return spec;
}

TaskSpec TaskSpec::parse(const std::string& name) {
    auto t = try_parse_task_name(name);
    if (!t)
        throw ConfigurationError("unknown task name: \"" + name + "\"");
    return get(*t);
}

std::string TaskSpec::class_name(int task_class) const {
    std::string pooled;
    int found = 0;
    for (ClassLabel c : kAllClasses) {
        auto mapped = map(c);
        if (mapped && *mapped == task_class) {
            if (found++)
                pooled += "+";
            pooled += label_name(c);
        }
    }
    return found ? pooled : "?";
}

std::vector<std::string> TaskSpec::class_names() const {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(n_classes));
    for (int i = 0; i < n_classes; ++i)
        names.push_back(class_name(i));
    return names;
}

} // namespace histo
