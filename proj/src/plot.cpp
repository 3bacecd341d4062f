#include "remm/plot.hpp"

#include <algorithm>
#include <cmath>

namespace remm {

namespace {

constexpr double kResidualThreshPx = 3.0;

void put_pixel(ImageRGB& img, int x, int y, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
    if (x < 0 || x >= img.w || y < 0 || y >= img.h) return;
    auto* p = img.px.data() + (static_cast<std::size_t>(y) * img.w + x) * 3;
    p[0] = r;
    p[1] = g;
    p[2] = b;
}

void draw_line(ImageRGB& img, double x0, double y0, double x1, double y1,
               std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double steps =
        std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1.0});
    const int n = static_cast<int>(std::ceil(steps));
    for (int i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) / n;
        put_pixel(img, static_cast<int>(std::lround(x0 + t * (x1 - x0))),
                  static_cast<int>(std::lround(y0 + t * (y1 - y0))), r, g, b);
    }
}

void draw_dot(ImageRGB& img, double x, double y, std::uint8_t r,
              std::uint8_t g, std::uint8_t b) {
    const int cx = static_cast<int>(std::lround(x));
    const int cy = static_cast<int>(std::lround(y));
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) put_pixel(img, cx + dx, cy + dy, r, g, b);
}

}  // namespace

void plot_matches(const ImageF& img_a, const ImageF& img_b,
                  const std::vector<MatchRow>& matches, const Homography& gt,
                  const std::string& out_path) {
    ImageRGB canvas;
    canvas.w = img_a.w + img_b.w;
    canvas.h = std::max(img_a.h, img_b.h);
    canvas.px.assign(static_cast<std::size_t>(canvas.w) * canvas.h * 3, 0);
    auto blit = [&](const ImageF& src, int off_x) {
        for (int y = 0; y < src.h; ++y)
            for (int x = 0; x < src.w; ++x) {
                const auto v = static_cast<std::uint8_t>(
                    std::lround(std::clamp(src.at(x, y), 0.0f, 1.0f) * 255.0f));
                put_pixel(canvas, x + off_x, y, v, v, v);
            }
    };
    blit(img_a, 0);
    blit(img_b, img_a.w);

    for (const auto& m : matches) {
        const Vec2 proj = warp_point(gt, {m.xa, m.ya});
        const double residual = std::hypot(proj.x - m.xb, proj.y - m.yb);
        const double bx = m.xb + img_a.w;
        if (residual < kResidualThreshPx) {
            draw_line(canvas, m.xa, m.ya, bx, m.yb, 0, 200, 0);
        } else {
            draw_dot(canvas, m.xa, m.ya, 220, 0, 0);
            draw_dot(canvas, bx, m.yb, 220, 0, 0);
        }
    }
    save_png_rgb(out_path, canvas);
}

}  // namespace remm
