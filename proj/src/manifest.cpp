#include "histo/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "histo/errors.hpp"
#include "histo/image.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace histo {

std::string partition_name(Partition p) {
    switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
    }
    return "?";
}

static Partition parse_partition(const std::string& s) {
    if (s == "train")
        return Partition::train;
    if (s == "val")
        return Partition::val;
    if (s == "test")
        return Partition::test;
    throw IntegrityError("unknown partition name in split file: \"" + s + "\"");
}

DatasetManifest DatasetManifest::from_records(std::vector<TileRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const TileRecord& a, const TileRecord& b) { return a.tile_id < b.tile_id; });
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].tile_id == records[i - 1].tile_id)
            throw IntegrityError("duplicate tile_id: \"" + records[i].tile_id + "\"");
    DatasetManifest manifest;
    manifest.records = std::move(records);
    for (const TileRecord& r : manifest.records)
        ++manifest.class_counts[static_cast<int>(r.label)];
    return manifest;
}

namespace {

void probe_record_dimensions(TileRecord& record, const ManifestLoadOptions& options) {
    if (!options.probe_dimensions && !options.expected_tile_px)
        return;
    auto size = read_image_size(record.image_path);
    if (!size)
        throw IngestionError("cannot read image header: " + record.image_path.string());
    record.width_px = size->width;
    record.height_px = size->height;
    if (options.expected_tile_px &&
        (record.width_px != *options.expected_tile_px ||
         record.height_px != *options.expected_tile_px)) {
        throw IntegrityError("tile \"" + record.tile_id + "\" is " +
                             std::to_string(record.width_px) + "x" +
                             std::to_string(record.height_px) + ", expected " +
                             std::to_string(*options.expected_tile_px) + " square");
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

std::string trimmed(std::string s) {
    const char* ws = " \t\r\n";
    s.erase(0, s.find_first_not_of(ws));
    s.erase(s.find_last_not_of(ws) + 1);
    return s;
}

DatasetManifest load_csv_manifest(const fs::path& root, const ManifestLoadOptions& options) {
    fs::path csv_path = root;
    if (fs::is_directory(csv_path))
        csv_path /= "manifest.csv";
    std::ifstream in(csv_path);
    if (!in)
        throw IngestionError("cannot open manifest CSV: " + csv_path.string());

    std::string line;
    if (!std::getline(in, line))
        throw IngestionError("empty manifest CSV: " + csv_path.string());
    // Tolerate a UTF-8 BOM and trailing CR.
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
        line.erase(0, 3);
    // Canonical header plus an optional slide-id column for grouped splits.
    bool has_wsi_column = false;
    if (trimmed(line) == "tile_id,image_path,label,source_wsi_id")
        has_wsi_column = true;
    else if (trimmed(line) != "tile_id,image_path,label")
        throw IngestionError("manifest CSV must start with header "
                             "\"tile_id,image_path,label\", got \"" +
                             trimmed(line) + "\"");

    const std::size_t want_cells = has_wsi_column ? 4 : 3;
    const fs::path base = csv_path.parent_path();
    std::vector<TileRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trimmed(line).empty())
            continue;
        auto cells = split_csv_line(line);
        if (cells.size() != want_cells)
            throw IngestionError(csv_path.string() + ":" + std::to_string(line_no) +
                                 ": expected " + std::to_string(want_cells) +
                                 " columns, got " + std::to_string(cells.size()));
        TileRecord record;
        record.tile_id = trimmed(cells[0]);
        if (record.tile_id.empty())
            throw IngestionError(csv_path.string() + ":" + std::to_string(line_no) +
                                 ": empty tile_id");
        fs::path p = trimmed(cells[1]);
        record.image_path = p.is_absolute() ? p : base / p;
        record.label = parse_label(trimmed(cells[2]));
        if (has_wsi_column) {
            const std::string wsi = trimmed(cells[3]);
            if (!wsi.empty())
                record.source_wsi_id = wsi;
        }
        if (!fs::exists(record.image_path))
            throw IngestionError("missing image file: " + record.image_path.string() +
                                 " (tile \"" + record.tile_id + "\")");
        probe_record_dimensions(record, options);
        records.push_back(std::move(record));
    }
    if (records.empty())
        throw IntegrityError("no records found in " + csv_path.string());
    return DatasetManifest::from_records(std::move(records));
}

bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

DatasetManifest load_folder_manifest(const fs::path& root, const ManifestLoadOptions& options) {
    if (!fs::is_directory(root))
        throw IngestionError("dataset root is not a directory: " + root.string());
    std::vector<TileRecord> records;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory())
            continue;
        auto label = try_parse_label(entry.path().filename().string());
        if (!label)
            continue; // unrelated directory
        std::vector<fs::path> files;
        for (const auto& file : fs::directory_iterator(entry.path()))
            if (file.is_regular_file() && has_image_extension(file.path()))
                files.push_back(file.path());
        std::sort(files.begin(), files.end());
        for (const fs::path& p : files) {
            TileRecord record;
            record.tile_id = p.stem().string();
            record.image_path = p;
            record.label = *label;
            probe_record_dimensions(record, options);
            records.push_back(std::move(record));
        }
    }
    if (records.empty())
        throw IntegrityError("no records found under " + root.string());
    return DatasetManifest::from_records(std::move(records));
}

} // namespace

DatasetManifest load_manifest(const fs::path& root, const ManifestLoadOptions& options) {
    if (!fs::exists(root))
        throw IngestionError("dataset root does not exist: " + root.string());
    switch (options.layout) {
    case ManifestLayout::csv_manifest: return load_csv_manifest(root, options);
    case ManifestLayout::folder_per_class: return load_folder_manifest(root, options);
    }
    throw IngestionError("unknown manifest layout");
}

void save_manifest_csv(const DatasetManifest& manifest, const fs::path& csv_path) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out)
        throw IngestionError("cannot write manifest CSV: " + csv_path.string());
    bool any_wsi = false;
    for (const TileRecord& r : manifest.records)
        any_wsi = any_wsi || r.source_wsi_id.has_value();
    out << (any_wsi ? "tile_id,image_path,label,source_wsi_id\n" : "tile_id,image_path,label\n");
    const fs::path base = csv_path.parent_path();
    for (const TileRecord& r : manifest.records) {
        fs::path p = r.image_path.lexically_proximate(base.empty() ? fs::path(".") : base);
        out << r.tile_id << "," << p.generic_string() << "," << label_name(r.label);
        if (any_wsi)
            out << "," << r.source_wsi_id.value_or("");
        out << "\n";
    }
}

std::array<std::size_t, 3> SplitAssignment::partition_sizes() const {
    std::array<std::size_t, 3> sizes{};
    for (const auto& [id, p] : membership)
        ++sizes[static_cast<int>(p)];
    return sizes;
}

namespace {

// floor with 1e-9 slack: products like 10*0.7 whose mathematical value is an
// integer must not round down through binary representation error.
std::size_t ratio_floor(std::size_t n, double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

void validate_ratios(const SplitRatios& ratios) {
    if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0)
        throw SplitError("split ratios must be positive");
    const double sum = ratios.train + ratios.val + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw SplitError("split ratios must sum to 1, got " + std::to_string(sum));
}

// Seeded Fisher-Yates; hand-rolled so the permutation is pinned to the
// mt19937_64 stream rather than a library's std::shuffle implementation.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

SplitAssignment split_grouped_by_wsi(const DatasetManifest& manifest, const SplitRatios& ratios,
                                     std::uint64_t seed) {
    // Whole-WSI assignment: greedy fill toward per-partition tile targets.
    // Tiles without a source_wsi_id form singleton groups.
    std::map<std::string, std::vector<const TileRecord*>> groups;
    for (const TileRecord& r : manifest.records) {
        const std::string key =
            r.source_wsi_id ? "wsi:" + *r.source_wsi_id : "tile:" + r.tile_id;
        groups[key].push_back(&r);
    }
    std::vector<const std::vector<const TileRecord*>*> order;
    order.reserve(groups.size());
    for (const auto& [key, tiles] : groups)
        order.push_back(&tiles);
    std::mt19937_64 rng(seed);
    deterministic_shuffle(order, rng);

    const double total = static_cast<double>(manifest.total());
    const std::array<double, 3> targets = {ratios.train * total, ratios.val * total,
                                           ratios.test * total};
    std::array<double, 3> assigned{};
    SplitAssignment split;
    split.seed = seed;
    split.ratios = ratios;
    for (const auto* tiles : order) {
        int best = 0;
        for (int p = 1; p < 3; ++p)
            if (targets[p] - assigned[p] > targets[best] - assigned[best])
                best = p;
        assigned[best] += static_cast<double>(tiles->size());
        for (const TileRecord* r : *tiles)
            split.membership[r->tile_id] = static_cast<Partition>(best);
    }
    return split;
}

} // namespace

SplitAssignment split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                              std::uint64_t seed, const SplitOptions& options) {
    validate_ratios(ratios);
    if (options.group_by_wsi)
        return split_grouped_by_wsi(manifest, ratios, seed);

    // Partition sizes: floor(total*train), floor(total*val), remainder.
    // Within each class the allocation starts from the per-class floors and
    // the global shortfall (per-class floors under-shoot the global floor)
    // is handed out by largest fractional remainder, so every train/val
    // stratum stays within one tile of ratio*count.
    struct ClassPlan {
        ClassLabel label;
        std::vector<const TileRecord*> tiles;
        std::size_t n_train = 0, n_val = 0;
        double train_frac = 0.0, val_frac = 0.0;
    };
    std::vector<ClassPlan> plans;
    for (ClassLabel c : kAllClasses) {
        ClassPlan plan;
        plan.label = c;
        for (const TileRecord& r : manifest.records)
            if (r.label == c)
                plan.tiles.push_back(&r);
        if (plan.tiles.empty())
            continue;
        if (plan.tiles.size() < 3)
            throw SplitError("class " + label_name(c) + " has only " +
                             std::to_string(plan.tiles.size()) +
                             " tiles; cannot populate train/val/test");
        const double n = static_cast<double>(plan.tiles.size());
        plan.n_train = ratio_floor(plan.tiles.size(), ratios.train);
        plan.n_val = ratio_floor(plan.tiles.size(), ratios.val);
        plan.train_frac = n * ratios.train - static_cast<double>(plan.n_train);
        plan.val_frac = n * ratios.val - static_cast<double>(plan.n_val);
        plans.push_back(std::move(plan));
    }

    const std::size_t total = manifest.total();
    const std::size_t target_train = ratio_floor(total, ratios.train);
    const std::size_t target_val = ratio_floor(total, ratios.val);
    auto distribute = [&](std::size_t target, auto count_of, auto frac_of, auto bump) {
        std::size_t assigned = 0;
        for (const ClassPlan& p : plans)
            assigned += count_of(p);
        std::vector<std::size_t> order(plans.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return frac_of(plans[a]) > frac_of(plans[b]);
        });
        for (std::size_t k = 0; assigned < target && k < order.size(); ++k) {
            ClassPlan& p = plans[order[k]];
            if (p.n_train + p.n_val + 1 <= p.tiles.size()) {
                bump(p);
                ++assigned;
            }
        }
    };
    distribute(
        target_train, [](const ClassPlan& p) { return p.n_train; },
        [](const ClassPlan& p) { return p.train_frac; }, [](ClassPlan& p) { ++p.n_train; });
    distribute(
        target_val, [](const ClassPlan& p) { return p.n_val; },
        [](const ClassPlan& p) { return p.val_frac; }, [](ClassPlan& p) { ++p.n_val; });

    SplitAssignment split;
    split.seed = seed;
    split.ratios = ratios;
    std::mt19937_64 rng(seed);
    // Classes shuffled in fixed enum order so the draw sequence depends
    // only on the seed and the per-class tile_id sets.
    for (ClassPlan& plan : plans) {
        deterministic_shuffle(plan.tiles, rng);
        for (std::size_t i = 0; i < plan.tiles.size(); ++i) {
            Partition p = i < plan.n_train                ? Partition::train
                          : i < plan.n_train + plan.n_val ? Partition::val
                                                          : Partition::test;
            split.membership[plan.tiles[i]->tile_id] = p;
        }
    }
    return split;
}

void save_split_json(const SplitAssignment& split, const fs::path& path) {
    json membership = json::object();
    for (const auto& [id, p] : split.membership)
        membership[id] = partition_name(p);
    json doc;
    doc["seed"] = split.seed;
    doc["ratios"] = {split.ratios.train, split.ratios.val, split.ratios.test};
    doc["membership"] = std::move(membership);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IntegrityError("cannot write split file: " + path.string());
    out << doc.dump(2) << "\n";
}

SplitAssignment load_split_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IntegrityError("cannot open split file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IntegrityError("malformed split file " + path.string() + ": " + e.what());
    }
    SplitAssignment split;
    split.seed = doc.at("seed").get<std::uint64_t>();
    const auto& r = doc.at("ratios");
    if (!r.is_array() || r.size() != 3)
        throw IntegrityError("split file ratios must be a 3-element array");
    split.ratios = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
    for (const auto& [id, p] : doc.at("membership").items())
        split.membership[id] = parse_partition(p.get<std::string>());
    return split;
}

TaskDataset derive_task(const DatasetManifest& manifest, const SplitAssignment& split,
                        const TaskSpec& task) {
    TaskDataset dataset;
    dataset.task = task;
    for (const TileRecord& r : manifest.records) {
        auto task_class = task.map(r.label);
        if (!task_class)
            continue; // class not part of this task
        auto it = split.membership.find(r.tile_id);
        if (it == split.membership.end())
            throw TaskDerivationError("tile \"" + r.tile_id + "\" missing from split");
        dataset.partitions[static_cast<int>(it->second)].emplace_back(r.image_path, *task_class);
    }
    for (Partition p : {Partition::train, Partition::val, Partition::test})
        if (dataset.of(p).empty())
            throw TaskDerivationError("task " + task_name_str(task.name) +
                                      " left partition \"" + partition_name(p) + "\" empty");
    return dataset;
}

} // namespace histo
