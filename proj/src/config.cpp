#include "histo/config.hpp"

#include <fstream>
#include <sstream>

#include "histo/errors.hpp"

namespace fs = std::filesystem;

namespace histo {

namespace {

std::string trimmed(std::string s) {
    const char* ws = " \t\r\n";
    s.erase(0, s.find_first_not_of(ws));
    s.erase(s.find_last_not_of(ws) + 1);
    return s;
}

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1" || value == "yes" || value == "on")
        return true;
    if (value == "false" || value == "0" || value == "no" || value == "off")
        return false;
    throw ConfigurationError("config key \"" + key + "\": expected a boolean, got \"" + value +
                             "\"");
}

double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size())
            throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigurationError("config key \"" + key + "\": expected a number, got \"" +
                                 value + "\"");
    }
}

long long parse_int(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size())
            throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigurationError("config key \"" + key + "\": expected an integer, got \"" +
                                 value + "\"");
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trimmed(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

std::string fill_mode_name(FillMode m) {
    switch (m) {
    case FillMode::nearest: return "nearest";
    case FillMode::reflect: return "reflect";
    case FillMode::constant: return "constant";
    }
    return "?";
}

} // namespace

IniDoc IniDoc::parse(const std::string& text) {
    IniDoc doc;
    std::string section;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trimmed(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigurationError("config line " + std::to_string(line_no) +
                                         ": malformed section header");
            section = trimmed(line.substr(1, line.size() - 2));
            doc.sections[section]; // section may stay empty
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigurationError("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        doc.sections[section][trimmed(line.substr(0, eq))] = trimmed(line.substr(eq + 1));
    }
    return doc;
}

IniDoc IniDoc::parse_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigurationError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<std::string> IniDoc::get(const std::string& section,
                                       const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end())
        return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end())
        return std::nullopt;
    return k->second;
}

ExperimentPlan ExperimentPlan::from_ini(const IniDoc& doc) {
    ExperimentPlan plan;
    auto str = [&](const char* sec, const char* key, std::string fallback) {
        return doc.get(sec, key).value_or(std::move(fallback));
    };

    plan.dataset_root = str("dataset", "root", "");
    const std::string layout = str("dataset", "layout", "csv_manifest");
    if (layout == "csv_manifest")
        plan.layout = ManifestLayout::csv_manifest;
    else if (layout == "folder_per_class")
        plan.layout = ManifestLayout::folder_per_class;
    else
        throw ConfigurationError("unknown dataset layout \"" + layout + "\"");
    if (auto v = doc.get("dataset", "expected_tile_px")) {
        const long long px = parse_int(*v, "expected_tile_px");
        if (px > 0)
            plan.expected_tile_px = int(px);
    }

    if (auto v = doc.get("split", "ratios")) {
        auto parts = split_list(*v);
        if (parts.size() != 3)
            throw ConfigurationError("split ratios must be three comma-separated numbers");
        plan.ratios = {parse_double(parts[0], "ratios"), parse_double(parts[1], "ratios"),
                       parse_double(parts[2], "ratios")};
    }
    if (auto v = doc.get("split", "seed"))
        plan.split_seed = std::uint64_t(parse_int(*v, "split.seed"));
    if (auto v = doc.get("split", "group_by_wsi"))
        plan.group_by_wsi = parse_bool(*v, "group_by_wsi");

    if (auto v = doc.get("tasks", "names")) {
        plan.tasks.clear();
        for (const std::string& name : split_list(*v)) {
            auto t = try_parse_task_name(name);
            if (!t)
                throw ConfigurationError("unknown task \"" + name + "\" in config");
            plan.tasks.push_back(*t);
        }
        if (plan.tasks.empty())
            throw ConfigurationError("tasks.names is empty");
    }

    if (auto v = doc.get("models", "backbones")) {
        plan.backbones.clear();
        for (const std::string& name : split_list(*v))
            plan.backbones.push_back(parse_backbone(name));
        if (plan.backbones.empty())
            throw ConfigurationError("models.backbones is empty");
    }
    if (auto v = doc.get("models", "fc1_units"))
        plan.fc1_units = int(parse_int(*v, "fc1_units"));
    if (auto v = doc.get("models", "fc2_units"))
        plan.fc2_units = int(parse_int(*v, "fc2_units"));
    if (auto v = doc.get("models", "dropout_rate"))
        plan.dropout_rate = parse_double(*v, "dropout_rate");
    if (auto v = doc.get("models", "freeze_backbone"))
        plan.freeze_backbone = parse_bool(*v, "freeze_backbone");
    plan.weights_dir = str("models", "weights_dir", "");
    if (auto v = doc.get("models", "init_seed"))
        plan.init_seed = std::uint64_t(parse_int(*v, "init_seed"));

    if (auto v = doc.get("train", "learning_rate"))
        plan.train.learning_rate = parse_double(*v, "learning_rate");
    if (auto v = doc.get("train", "max_epochs"))
        plan.train.max_epochs = int(parse_int(*v, "max_epochs"));
    if (auto v = doc.get("train", "batch_train"))
        plan.train.batch_sizes.train = int(parse_int(*v, "batch_train"));
    if (auto v = doc.get("train", "batch_val"))
        plan.train.batch_sizes.val = int(parse_int(*v, "batch_val"));
    if (auto v = doc.get("train", "batch_test"))
        plan.train.batch_sizes.test = int(parse_int(*v, "batch_test"));
    if (auto v = doc.get("train", "early_stop_val_acc"))
        plan.train.early_stop_val_acc = parse_double(*v, "early_stop_val_acc");
    if (auto v = doc.get("train", "seed"))
        plan.train.seed = std::uint64_t(parse_int(*v, "train.seed"));

    if (auto v = doc.get("augment", "rotation_max_deg"))
        plan.augment.rotation_max_deg = parse_double(*v, "rotation_max_deg");
    if (auto v = doc.get("augment", "width_shift_frac"))
        plan.augment.width_shift_frac = parse_double(*v, "width_shift_frac");
    if (auto v = doc.get("augment", "height_shift_frac"))
        plan.augment.height_shift_frac = parse_double(*v, "height_shift_frac");
    if (auto v = doc.get("augment", "horizontal_flip"))
        plan.augment.horizontal_flip = parse_bool(*v, "horizontal_flip");
    if (auto v = doc.get("augment", "vertical_flip"))
        plan.augment.vertical_flip = parse_bool(*v, "vertical_flip");
    if (auto v = doc.get("augment", "fill_mode")) {
        if (*v == "nearest")
            plan.augment.fill_mode = FillMode::nearest;
        else if (*v == "reflect")
            plan.augment.fill_mode = FillMode::reflect;
        else if (*v == "constant")
            plan.augment.fill_mode = FillMode::constant;
        else
            throw ConfigurationError("unknown fill_mode \"" + *v + "\"");
    }
    if (auto v = doc.get("augment", "fill_value"))
        plan.augment.fill_value = float(parse_double(*v, "fill_value"));
    plan.augment.rng_seed = plan.train.seed;

    plan.results_dir = str("output", "results_dir", "");

    plan.train.validate();
    plan.augment.validate();
    return plan;
}

ExperimentPlan ExperimentPlan::from_ini_file(const fs::path& path) {
    return from_ini(IniDoc::parse_file(path));
}

std::string ExperimentPlan::to_ini() const {
    std::ostringstream out;
    out.precision(15);
    out << "[dataset]\n";
    out << "root = " << dataset_root.generic_string() << "\n";
    out << "layout = "
        << (layout == ManifestLayout::csv_manifest ? "csv_manifest" : "folder_per_class")
        << "\n";
    if (expected_tile_px)
        out << "expected_tile_px = " << *expected_tile_px << "\n";
    out << "\n[split]\n";
    out << "ratios = " << ratios.train << "," << ratios.val << "," << ratios.test << "\n";
    out << "seed = " << split_seed << "\n";
    out << "group_by_wsi = " << (group_by_wsi ? "true" : "false") << "\n";
    out << "\n[tasks]\n";
    out << "names = ";
    for (std::size_t i = 0; i < tasks.size(); ++i)
        out << (i ? "," : "") << task_name_str(tasks[i]);
    out << "\n";
    out << "\n[models]\n";
    out << "backbones = ";
    for (std::size_t i = 0; i < backbones.size(); ++i)
        out << (i ? "," : "") << backbone_name(backbones[i]);
    out << "\n";
    out << "fc1_units = " << fc1_units << "\n";
    out << "fc2_units = " << fc2_units << "\n";
    out << "dropout_rate = " << dropout_rate << "\n";
    out << "freeze_backbone = " << (freeze_backbone ? "true" : "false") << "\n";
    if (!weights_dir.empty())
        out << "weights_dir = " << weights_dir << "\n";
    out << "init_seed = " << init_seed << "\n";
    out << "\n[train]\n";
    out << "learning_rate = " << train.learning_rate << "\n";
    out << "max_epochs = " << train.max_epochs << "\n";
    out << "batch_train = " << train.batch_sizes.train << "\n";
    out << "batch_val = " << train.batch_sizes.val << "\n";
    out << "batch_test = " << train.batch_sizes.test << "\n";
    out << "early_stop_val_acc = " << train.early_stop_val_acc << "\n";
    out << "seed = " << train.seed << "\n";
    out << "\n[augment]\n";
    out << "rotation_max_deg = " << augment.rotation_max_deg << "\n";
    out << "width_shift_frac = " << augment.width_shift_frac << "\n";
    out << "height_shift_frac = " << augment.height_shift_frac << "\n";
    out << "horizontal_flip = " << (augment.horizontal_flip ? "true" : "false") << "\n";
    out << "vertical_flip = " << (augment.vertical_flip ? "true" : "false") << "\n";
    out << "fill_mode = " << fill_mode_name(augment.fill_mode) << "\n";
    out << "fill_value = " << augment.fill_value << "\n";
    if (!results_dir.empty()) {
        out << "\n[output]\n";
        out << "results_dir = " << results_dir.generic_string() << "\n";
    }
    return out.str();
}

ModelConfig ExperimentPlan::model_config_for(Backbone backbone, int n_classes) const {
    ModelConfig cfg;
    cfg.backbone = backbone;
    cfg.n_classes = n_classes;
    cfg.fc1_units = fc1_units;
    cfg.fc2_units = fc2_units;
    cfg.dropout_rate = dropout_rate;
    cfg.freeze_backbone = freeze_backbone;
    cfg.init_seed = init_seed;
    if (!weights_dir.empty())
        cfg.weights_path =
            (fs::path(weights_dir) / (backbone_name(backbone) + ".htlc")).string();
    return cfg;
}

std::string run_id_for(TaskName task, Backbone backbone, std::uint64_t seed) {
    return task_name_str(task) + "__" + backbone_name(backbone) + "__seed" +
           std::to_string(seed);
}

} // namespace histo
