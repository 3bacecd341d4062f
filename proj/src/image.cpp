#include "remm/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "remm/geometry.hpp"

namespace remm {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageF load_png_gray(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open image: " + path);
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Normalize everything to 8-bit gray.
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
        png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    png_color_16 bg{};
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR)
        png_set_rgb_to_gray(png, PNG_ERROR_ACTION_NONE, -1, -1);
    (void)bg;
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = raw.data() + static_cast<std::size_t>(y) * w;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    ImageF img;
    img.w = w;
    img.h = h;
    img.px.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        img.px[i] = static_cast<float>(raw[i]) / 255.0f;
    return img;
}

void save_png_gray(const std::string& path, const ImageF& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write image: " + path);
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w),
                 static_cast<png_uint_32>(img.h), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.w));
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const float v = std::clamp(img.at(x, y), 0.0f, 1.0f);
            row[static_cast<std::size_t>(x)] =
                static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_png_rgb(const std::string& path, const ImageRGB& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write image: " + path);
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w),
                 static_cast<png_uint_32>(img.h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y)
        png_write_row(png, const_cast<png_bytep>(
                               img.px.data() +
                               static_cast<std::size_t>(y) * img.w * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageF resize_bilinear(const ImageF& img, int out_h, int out_w) {
    ImageF out;
    out.h = out_h;
    out.w = out_w;
    // Pure rescale expressed as a homography so the whole pipeline shares
    // one resampling convention.
    const double sx = static_cast<double>(img.w) / out_w;
    const double sy = static_cast<double>(img.h) / out_h;
    out.px.resize(static_cast<std::size_t>(out_h) * out_w);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const float fx = static_cast<float>((x + 0.5) * sx - 0.5);
            const float fy = static_cast<float>((y + 0.5) * sy - 0.5);
            const int x0 = static_cast<int>(std::floor(fx));
            const int y0 = static_cast<int>(std::floor(fy));
            const float ax = fx - x0, ay = fy - y0;
            float acc = 0.0f;
            float wsum = 0.0f;
            const float ws[4] = {(1 - ax) * (1 - ay), ax * (1 - ay),
                                 (1 - ax) * ay, ax * ay};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            for (int k = 0; k < 4; ++k) {
                const int cx = std::clamp(xs[k], 0, img.w - 1);
                const int cy = std::clamp(ys[k], 0, img.h - 1);
                acc += ws[k] * img.at(cx, cy);
                wsum += ws[k];
            }
            out.at(x, y) = wsum > 0.0f ? acc / wsum : 0.0f;
        }
    }
    return out;
}

}  // namespace remm
