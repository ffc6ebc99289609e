#ifndef HISTO_IMAGE_HPP
#define HISTO_IMAGE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace histo {

// Interleaved 8-bit raster, row-major, `channels` samples per pixel.
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// Decodes a PNG or JPEG file. Palette and RGBA inputs are expanded/stripped
// to RGB; grayscale comes back with channels=1 (rejected downstream by
// preprocess). Throws PreprocessError on unreadable or unsupported files.
ImageU8 decode_image(const std::filesystem::path& path);

// Width/height from the file header alone (PNG IHDR or JPEG SOF marker).
struct ImageSize {
    int width = 0;
    int height = 0;
};
std::optional<ImageSize> read_image_size(const std::filesystem::path& path);

// 8-bit RGB (or grayscale) PNG writer, used for fixtures and tooling.
void write_png(const std::filesystem::path& path, const ImageU8& image);

} // namespace histo

#endif
