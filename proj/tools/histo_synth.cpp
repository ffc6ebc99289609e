// Generates a small synthetic folder-per-class dataset (distinct color
// statistics per tissue class plus speckle) for smoke-testing the workbench
// without the real corpus.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "histo/image.hpp"
#include "histo/labels.hpp"

using namespace histo;

int main(int argc, char** argv) {
    CLI::App app{"synthetic tile dataset generator"};
    std::string out_dir = "synth_dataset";
    int per_class = 12;
    int tile_px = 64;
    unsigned long long seed = 1;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--per-class", per_class, "tiles per class")->check(CLI::PositiveNumber);
    app.add_option("--tile-px", tile_px, "tile edge length")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "noise seed");
    CLI11_PARSE(app, argc, argv);

    const std::array<std::array<int, 3>, 3> base = {{
        {200, 120, 180}, // NT: pinkish stroma
        {120, 80, 60},   // NCT: dark necrotic tone
        {150, 60, 150},  // VT: dense purple
    }};
    std::mt19937_64 rng(seed);
    for (ClassLabel label : kAllClasses) {
        const auto dir = std::filesystem::path(out_dir) / label_name(label);
        std::filesystem::create_directories(dir);
        const auto& b = base[std::size_t(label)];
        for (int i = 0; i < per_class; ++i) {
            ImageU8 img;
            img.width = tile_px;
            img.height = tile_px;
            img.channels = 3;
            img.pixels.resize(std::size_t(tile_px) * tile_px * 3);
            for (std::size_t p = 0; p < img.pixels.size(); p += 3)
                for (int c = 0; c < 3; ++c) {
                    const int noise = int(rng() % 61) - 30;
                    img.pixels[p + std::size_t(c)] =
                        std::uint8_t(std::clamp(b[std::size_t(c)] + noise, 0, 255));
                }
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04d.png", label_name(label).c_str(), i);
            write_png(dir / name, img);
        }
    }
    std::cout << "wrote " << 3 * per_class << " tiles under " << out_dir << "\n";
    return 0;
}
