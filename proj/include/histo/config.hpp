#ifndef HISTO_CONFIG_HPP
#define HISTO_CONFIG_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "histo/manifest.hpp"
#include "histo/model_zoo.hpp"
#include "histo/pipeline.hpp"
#include "histo/trainer.hpp"

namespace histo {

// Minimal key/section config format: [section], key = value, '#' comments.
struct IniDoc {
    std::map<std::string, std::map<std::string, std::string>> sections;

    static IniDoc parse(const std::string& text);
    static IniDoc parse_file(const std::filesystem::path& path);
    std::optional<std::string> get(const std::string& section, const std::string& key) const;
};

// The whole experiment matrix: dataset, split, tasks x backbones, training
// and augmentation settings, output location.
struct ExperimentPlan {
    std::filesystem::path dataset_root;
    ManifestLayout layout = ManifestLayout::csv_manifest;
    std::optional<int> expected_tile_px;

    SplitRatios ratios;
    std::uint64_t split_seed = 42;
    bool group_by_wsi = false;

    std::vector<TaskName> tasks{kAllTasks.begin(), kAllTasks.end()};
    std::vector<Backbone> backbones{Backbone::VGG19, Backbone::InceptionV3};

    int fc1_units = 512;
    int fc2_units = 1024;
    double dropout_rate = 0.5;
    bool freeze_backbone = true;
    std::string weights_dir; // <dir>/<Backbone>.htlc packs; empty = seeded init
    std::uint64_t init_seed = 1;

    TrainConfig train;
    AugmentConfig augment;

    // Empty until set: the CLI resolves flag > config > HISTO_TL_RESULTS > "results".
    std::filesystem::path results_dir;

    static ExperimentPlan from_ini(const IniDoc& doc);
    static ExperimentPlan from_ini_file(const std::filesystem::path& path);
    std::string to_ini() const;

    ModelConfig model_config_for(Backbone backbone, int n_classes) const;
};

std::string run_id_for(TaskName task, Backbone backbone, std::uint64_t seed);

} // namespace histo

#endif
