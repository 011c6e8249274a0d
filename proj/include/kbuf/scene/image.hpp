#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

namespace kbuf {

/// Row-major H x W x channels image of reals, nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c = 3, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    friend bool operator==(const Image&, const Image&) = default;
};

namespace png_detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace png_detail

/// Writes 8-bit gray (1 channel) or RGB (3 channels); values map to round(v * 255).
inline void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_png: 1 or 3 channels required");
    png_detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png: cannot open " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: libpng init failed");
    }
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: libpng error writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * img.channels + c] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads any 8/16-bit PNG and converts it to RGB reals in [0,1] (byte / 255).
inline Image read_png(const std::filesystem::path& path) {
    png_detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_png: cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: libpng init failed");
    }
    Image img;
    std::vector<png_byte> row;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: malformed PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    img = Image(w, h, 3);
    row.resize(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace kbuf
