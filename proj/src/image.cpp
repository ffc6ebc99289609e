#include "histo/image.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "histo/errors.hpp"

namespace histo {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f)
        throw PreprocessError("cannot open image file: " + path.string());
    return f;
}

bool has_png_signature(std::FILE* f) {
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f) != 8)
        return false;
    std::rewind(f);
    return png_sig_cmp(sig, 0, 8) == 0;
}

ImageU8 decode_png(std::FILE* f, const std::filesystem::path& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw PreprocessError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw PreprocessError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw PreprocessError("corrupt or unsupported PNG: " + path.string());
    }
    png_init_io(png, f);
    png_read_info(png, info);

    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    if (png_get_bit_depth(png, info) == 16)
        png_set_scale_16(png);
    // Alpha carries no tissue information; drop it.
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    ImageU8 img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);

    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<std::size_t>(y)] = img.pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

ImageU8 decode_jpeg(std::FILE* f, const std::filesystem::path& path) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw PreprocessError("corrupt or unsupported JPEG: " + path.string());
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components >= 3 ? JCS_RGB : JCS_GRAYSCALE;
    jpeg_start_decompress(&cinfo);

    ImageU8 img;
    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.channels = static_cast<int>(cinfo.output_components);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

} // namespace

ImageU8 decode_image(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    if (has_png_signature(f.get()))
        return decode_png(f.get(), path);
    // Not PNG: try JPEG (SOI marker 0xFFD8).
    unsigned char soi[2] = {0, 0};
    if (std::fread(soi, 1, 2, f.get()) == 2 && soi[0] == 0xFF && soi[1] == 0xD8) {
        std::rewind(f.get());
        return decode_jpeg(f.get(), path);
    }
    throw PreprocessError("not a PNG or JPEG file: " + path.string());
}

std::optional<ImageSize> read_image_size(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return std::nullopt;
    unsigned char head[26];
    in.read(reinterpret_cast<char*>(head), sizeof(head));
    const auto got = static_cast<std::size_t>(in.gcount());

    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (got >= 24 && std::memcmp(head, png_sig, 8) == 0) {
        // IHDR is mandatory first chunk: width/height at offsets 16/20.
        auto be32 = [&](int off) {
            return (head[off] << 24) | (head[off + 1] << 16) | (head[off + 2] << 8) | head[off + 3];
        };
        return ImageSize{be32(16), be32(20)};
    }

    if (got >= 4 && head[0] == 0xFF && head[1] == 0xD8) {
        // Walk JPEG segments to the first SOF marker.
        in.seekg(2);
        while (in) {
            int byte = in.get();
            if (byte != 0xFF)
                continue;
            int marker = in.get();
            while (marker == 0xFF)
                marker = in.get();
            if (marker == EOF)
                break;
            if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD9))
                continue; // no length field
            int len_hi = in.get(), len_lo = in.get();
            if (len_hi == EOF || len_lo == EOF)
                break;
            int seg_len = (len_hi << 8) | len_lo;
            const bool is_sof = (marker >= 0xC0 && marker <= 0xCF) && marker != 0xC4 &&
                                marker != 0xC8 && marker != 0xCC;
            if (is_sof) {
                unsigned char sof[5];
                in.read(reinterpret_cast<char*>(sof), 5);
                if (in.gcount() != 5)
                    break;
                int h = (sof[1] << 8) | sof[2];
                int w = (sof[3] << 8) | sof[4];
                return ImageSize{w, h};
            }
            in.seekg(seg_len - 2, std::ios::cur);
        }
    }
    return std::nullopt;
}

void write_png(const std::filesystem::path& path, const ImageU8& image) {
    if (image.width <= 0 || image.height <= 0 ||
        (image.channels != 1 && image.channels != 3))
        throw PreprocessError("write_png: expected non-empty 1- or 3-channel image");
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png)
            png_destroy_write_struct(&png, info ? &info : nullptr);
        throw PreprocessError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw PreprocessError("PNG write failed: " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y)
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace histo
