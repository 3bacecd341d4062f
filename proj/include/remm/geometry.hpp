#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace remm {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// 3x3 projective transform, normalized so m[2][2] == 1. theta_deg carries
// the rotation angle when the transform was built from one.
struct Homography {
    std::array<std::array<double, 3>, 3> m{};
    std::optional<double> theta_deg;

    static Homography identity();
    static Homography from_matrix(const std::array<std::array<double, 3>, 3>& m,
                                  std::optional<double> theta_deg = {});
    Homography inverse() const;
    double det() const;

    // One manifest line: 9 row-major decimals, optional "theta=<deg>".
    std::string serialize() const;
    static Homography parse(const std::string& line);
};

Homography compose(const Homography& a, const Homography& b);  // a * b

// T(center) * T(translation) * R(theta ccw) * S(scale) * T(-center),
// pixel coordinates. Throws on scale <= 0.
Homography make_homography(double theta_deg, double scale,
                           std::pair<double, double> translation,
                           std::pair<double, double> center);

// Row-major [out_h*out_w*2] grid of normalized [-1,1] source coordinates:
// each output pixel center mapped through H. [-1,1] spans the source image
// extent, so pixel center x sits at (2x+1)/src_w - 1.
std::vector<float> affine_grid(const Homography& h, int out_h, int out_w,
                               int src_h, int src_w);

// Homogeneous multiply + perspective divide. Points mapping to w ~ 0 come
// back as std::nullopt.
std::vector<std::optional<Vec2>> warp_points(const Homography& h,
                                             const std::vector<Vec2>& pts);
Vec2 warp_point(const Homography& h, const Vec2& p);

// Plain (non-taped) bilinear sampling of a single-channel image through a
// normalized grid, zero padding outside.
std::vector<float> grid_sample_plain(const float* img, int h, int w,
                                     const std::vector<float>& grid,
                                     int out_h, int out_w);

}  // namespace remm
