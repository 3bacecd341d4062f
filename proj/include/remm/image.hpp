#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace remm {

// Single-channel float image, intensities in [0,1], row-major.
struct ImageF {
    int w = 0;
    int h = 0;
    std::vector<float> px;

    float at(int x, int y) const { return px[static_cast<std::size_t>(y) * w + x]; }
    float& at(int x, int y) { return px[static_cast<std::size_t>(y) * w + x]; }
};

// 8-bit RGB image used by the match plotter.
struct ImageRGB {
    int w = 0;
    int h = 0;
    std::vector<std::uint8_t> px;  // 3 bytes per pixel
};

// 8-bit grayscale PNG load; color inputs are luma-converted.
ImageF load_png_gray(const std::string& path);
void save_png_gray(const std::string& path, const ImageF& img);
void save_png_rgb(const std::string& path, const ImageRGB& img);

// Bilinear resize (used for the multi-scale test pyramid).
ImageF resize_bilinear(const ImageF& img, int out_h, int out_w);

}  // namespace remm
