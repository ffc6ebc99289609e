#ifndef HISTO_MANIFEST_HPP
#define HISTO_MANIFEST_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "histo/labels.hpp"
#include "histo/tasks.hpp"

namespace histo {

struct TileRecord {
    std::string tile_id;
    std::filesystem::path image_path;
    ClassLabel label = ClassLabel::NT;
    std::optional<std::string> source_wsi_id;
    int width_px = 0;
    int height_px = 0;
};

// Validated, tile_id-sorted view of the labeled corpus.
struct DatasetManifest {
    std::vector<TileRecord> records;
    std::array<std::size_t, kNumClasses> class_counts{};

    std::size_t total() const { return records.size(); }
    std::size_t count(ClassLabel c) const { return class_counts[static_cast<int>(c)]; }

    // Sorts by tile_id, rejects duplicate ids, recomputes class_counts.
    // Does not touch the filesystem; loaders validate paths.
    static DatasetManifest from_records(std::vector<TileRecord> records);
};

enum class ManifestLayout { csv_manifest, folder_per_class };

struct ManifestLoadOptions {
    ManifestLayout layout = ManifestLayout::csv_manifest;
    // When set, every tile must be square with this edge length (the
    // published corpus is 1024x1024).
    std::optional<int> expected_tile_px;
    // Read image headers to fill width_px/height_px. Costs one small read
    // per file; required when expected_tile_px is set.
    bool probe_dimensions = true;
};

// root: the CSV file itself (or a directory containing manifest.csv) for
// csv_manifest; the dataset directory with NT/NCT/VT subfolders for
// folder_per_class. CSV columns: tile_id,image_path,label with image paths
// resolved relative to the CSV's directory.
DatasetManifest load_manifest(const std::filesystem::path& root,
                              const ManifestLoadOptions& options = {});

void save_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& csv_path);

enum class Partition : int { train = 0, val = 1, test = 2 };

std::string partition_name(Partition p);

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct SplitAssignment {
    std::uint64_t seed = 0;
    SplitRatios ratios;
    std::map<std::string, Partition> membership; // tile_id -> partition

    std::array<std::size_t, 3> partition_sizes() const;
};

struct SplitOptions {
    // Group tiles sharing a source_wsi_id into the same partition. Off by
    // default: tile-level stratified splitting. Grouped mode trades the
    // per-class ±1 stratification guarantee for leakage safety.
    bool group_by_wsi = false;
};

// Per-class stratified split driven solely by `seed`. Within each class,
// train gets floor(n*train_ratio) tiles, val gets floor(n*val_ratio), test
// the remainder (floor taken with 1e-9 slack so exact products like 10*0.7
// round as the mathematical floor).
SplitAssignment split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                              std::uint64_t seed, const SplitOptions& options = {});

void save_split_json(const SplitAssignment& split, const std::filesystem::path& path);
SplitAssignment load_split_json(const std::filesystem::path& path);

// One partition's tiles for a task: (image path, task-class index), in
// manifest (tile_id) order.
struct TaskDataset {
    TaskSpec task;
    std::array<std::vector<std::pair<std::filesystem::path, int>>, 3> partitions;

    const std::vector<std::pair<std::filesystem::path, int>>& of(Partition p) const {
        return partitions[static_cast<int>(p)];
    }
};

TaskDataset derive_task(const DatasetManifest& manifest, const SplitAssignment& split,
                        const TaskSpec& task);

} // namespace histo

#endif
