#ifndef HISTO_TEST_FIXTURES_HPP
#define HISTO_TEST_FIXTURES_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "histo/image.hpp"
#include "histo/labels.hpp"
#include "histo/manifest.hpp"

namespace histo::testing {

inline ImageU8 constant_image(int width, int height, std::array<std::uint8_t, 3> rgb) {
    ImageU8 img;
    img.width = width;
    img.height = height;
    img.channels = 3;
    img.pixels.resize(std::size_t(width) * height * 3);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        img.pixels[i] = rgb[0];
        img.pixels[i + 1] = rgb[1];
        img.pixels[i + 2] = rgb[2];
    }
    return img;
}

inline ImageU8 checkerboard_image(int width, int height, int cell = 8) {
    ImageU8 img;
    img.width = width;
    img.height = height;
    img.channels = 3;
    img.pixels.resize(std::size_t(width) * height * 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::uint8_t v = ((x / cell + y / cell) % 2) ? 255 : 0;
            for (int c = 0; c < 3; ++c)
                img.pixels[(std::size_t(y) * width + x) * 3 + c] = v;
        }
    return img;
}

// Writes per_class[i] constant-color PNGs for class i and a manifest.csv
// referencing them with relative paths. Returns the CSV path.
inline std::filesystem::path write_csv_dataset(const std::filesystem::path& dir,
                                               std::array<int, 3> per_class,
                                               int image_px = 8) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "tiles");
    const std::array<std::array<std::uint8_t, 3>, 3> colors = {{
        {220, 40, 40},
        {40, 220, 40},
        {40, 40, 220},
    }};
    std::ofstream csv(dir / "manifest.csv", std::ios::binary);
    csv << "tile_id,image_path,label\n";
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < per_class[c]; ++i) {
            const std::string name =
                label_name(static_cast<ClassLabel>(c)) + "_" + std::to_string(i);
            const fs::path rel = fs::path("tiles") / (name + ".png");
            write_png(dir / rel, constant_image(image_px, image_px, colors[std::size_t(c)]));
            csv << name << "," << rel.generic_string() << ","
                << label_name(static_cast<ClassLabel>(c)) << "\n";
        }
    }
    return dir / "manifest.csv";
}

// Manifest with fabricated paths, for split/derive logic that never touches
// the filesystem.
inline DatasetManifest synthetic_manifest(std::size_t nt, std::size_t nct, std::size_t vt) {
    std::vector<TileRecord> records;
    auto add = [&](ClassLabel label, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            TileRecord r;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%s_%05zu", label_name(label).c_str(), i);
            r.tile_id = buf;
            r.image_path = "mem/" + r.tile_id + ".png";
            r.label = label;
            records.push_back(std::move(r));
        }
    };
    add(ClassLabel::NT, nt);
    add(ClassLabel::NCT, nct);
    add(ClassLabel::VT, vt);
    return DatasetManifest::from_records(std::move(records));
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("histo_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

} // namespace histo::testing

#endif
