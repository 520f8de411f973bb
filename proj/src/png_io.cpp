#include "diae/png_io.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <png.h>

namespace diae {

namespace {

struct FileCloser {
    FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

void write_png(const std::string& path, int w, int h, int color_type,
               int channels, const std::vector<uint8_t>& pix) {
    require(int(pix.size()) == w * h * channels, "png write: pixel buffer size");
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    FileCloser closer{f};
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write failed: " + path);
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    // fixed settings keep output byte-stable
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[size_t(y)] = const_cast<png_bytep>(pix.data() + size_t(y) * w * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> read_png(const std::string& path, int want_channels, int& w,
                              int& h) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    FileCloser closer{f};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read failed: " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);
    w = int(png_get_image_width(png, info));
    h = int(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (want_channels == 3) {
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        png_set_strip_alpha(png);
    } else {
        if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
            color == PNG_COLOR_TYPE_PALETTE)
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    std::vector<uint8_t> pix(size_t(w) * h * want_channels);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[size_t(y)] = pix.data() + size_t(y) * w * want_channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return pix;
}

} // namespace

void write_png_rgb8(const std::string& path, int w, int h,
                    const std::vector<uint8_t>& rgb) {
    write_png(path, w, h, PNG_COLOR_TYPE_RGB, 3, rgb);
}

void write_png_gray8(const std::string& path, int w, int h,
                     const std::vector<uint8_t>& gray) {
    write_png(path, w, h, PNG_COLOR_TYPE_GRAY, 1, gray);
}

std::vector<uint8_t> read_png_rgb8(const std::string& path, int& w, int& h) {
    return read_png(path, 3, w, h);
}

std::vector<uint8_t> read_png_gray8(const std::string& path, int& w, int& h) {
    return read_png(path, 1, w, h);
}

std::vector<uint8_t> image_to_rgb8(const ImageF& img) {
    require(img.rank() == 3 && img.dim(0) == 3, "image_to_rgb8: expect [3,H,W]");
    const int h = img.dim(1), w = img.dim(2), hw = h * w;
    std::vector<uint8_t> out(size_t(hw) * 3);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < hw; ++i) {
            const float v = std::min(1.0f, std::max(0.0f, img[size_t(c) * hw + i]));
            out[size_t(i) * 3 + c] = uint8_t(std::lround(v * 255.0f));
        }
    return out;
}

ImageF rgb8_to_image(const std::vector<uint8_t>& rgb, int w, int h) {
    ImageF img({3, h, w});
    const int hw = h * w;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < hw; ++i)
            img[size_t(c) * hw + i] = float(rgb[size_t(i) * 3 + c]) / 255.0f;
    return img;
}

void write_image_png(const std::string& path, const ImageF& img) {
    write_png_rgb8(path, img.dim(2), img.dim(1), image_to_rgb8(img));
}

ImageF read_image_png(const std::string& path) {
    int w = 0, h = 0;
    const auto pix = read_png_rgb8(path, w, h);
    return rgb8_to_image(pix, w, h);
}

} // namespace diae
