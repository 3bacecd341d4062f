#include "remm/geometry.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace remm {

namespace {

constexpr double kDetEps = 1e-12;
constexpr double kPi = 3.14159265358979323846;

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul3(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

Mat3 translation(double tx, double ty) {
    return {{{1, 0, tx}, {0, 1, ty}, {0, 0, 1}}};
}

double det3(const Mat3& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

}  // namespace

Homography Homography::identity() {
    return from_matrix({{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}, 0.0);
}

Homography Homography::from_matrix(const Mat3& m,
                                   std::optional<double> theta_deg) {
    if (std::abs(m[2][2]) < kDetEps)
        throw std::invalid_argument("homography has m[2][2] ~ 0");
    Homography h;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) h.m[i][j] = m[i][j] / m[2][2];
    if (std::abs(det3(h.m)) <= kDetEps)
        throw std::invalid_argument("homography is singular");
    h.theta_deg = theta_deg;
    return h;
}

double Homography::det() const { return det3(m); }

Homography Homography::inverse() const {
    const double d = det3(m);
    if (std::abs(d) <= kDetEps)
        throw std::invalid_argument("cannot invert singular homography");
    Mat3 inv;
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
    std::optional<double> th;
    if (theta_deg) th = -*theta_deg;
    return from_matrix(inv, th);
}

std::string Homography::serialize() const {
    std::ostringstream os;
    os.precision(17);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) os << (i || j ? " " : "") << m[i][j];
    if (theta_deg) os << " theta=" << *theta_deg;
    return os.str();
}

Homography Homography::parse(const std::string& line) {
    std::istringstream is(line);
    Mat3 m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (!(is >> m[i][j]))
                throw std::invalid_argument("bad homography line: " + line);
    std::optional<double> th;
    std::string tok;
    if (is >> tok && tok.rfind("theta=", 0) == 0)
        th = std::stod(tok.substr(6));
    return from_matrix(m, th);
}

Homography compose(const Homography& a, const Homography& b) {
    std::optional<double> th;
    if (a.theta_deg && b.theta_deg) th = *a.theta_deg + *b.theta_deg;
    return Homography::from_matrix(matmul3(a.m, b.m), th);
}

Homography make_homography(double theta_deg, double scale,
                           std::pair<double, double> translation_px,
                           std::pair<double, double> center) {
    if (scale <= 0.0)
        throw std::invalid_argument("make_homography: scale must be > 0, got " +
                                    std::to_string(scale));
    if (!std::isfinite(theta_deg))
        throw std::invalid_argument("make_homography: non-finite theta");
    const double rad = theta_deg * kPi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const Mat3 rot = {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
    const Mat3 scl = {{{scale, 0, 0}, {0, scale, 0}, {0, 0, 1}}};
    Mat3 m = translation(center.first, center.second);
    m = matmul3(m, translation(translation_px.first, translation_px.second));
    m = matmul3(m, rot);
    m = matmul3(m, scl);
    m = matmul3(m, translation(-center.first, -center.second));
    return Homography::from_matrix(m, theta_deg);
}

Vec2 warp_point(const Homography& h, const Vec2& p) {
    const double w = h.m[2][0] * p.x + h.m[2][1] * p.y + h.m[2][2];
    return {(h.m[0][0] * p.x + h.m[0][1] * p.y + h.m[0][2]) / w,
            (h.m[1][0] * p.x + h.m[1][1] * p.y + h.m[1][2]) / w};
}

std::vector<std::optional<Vec2>> warp_points(const Homography& h,
                                             const std::vector<Vec2>& pts) {
    std::vector<std::optional<Vec2>> out;
    out.reserve(pts.size());
    for (const auto& p : pts) {
        const double w = h.m[2][0] * p.x + h.m[2][1] * p.y + h.m[2][2];
        if (std::abs(w) < kDetEps) {
            out.emplace_back(std::nullopt);
            continue;
        }
        out.emplace_back(Vec2{(h.m[0][0] * p.x + h.m[0][1] * p.y + h.m[0][2]) / w,
                              (h.m[1][0] * p.x + h.m[1][1] * p.y + h.m[1][2]) / w});
    }
    return out;
}

std::vector<float> affine_grid(const Homography& h, int out_h, int out_w,
                               int src_h, int src_w) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("affine_grid: output size must be >= 1");
    if (std::abs(h.det()) <= kDetEps)
        throw std::invalid_argument("affine_grid: non-invertible homography");
    std::vector<float> grid(static_cast<std::size_t>(out_h) * out_w * 2);
    // [-1,1] spans the image extent; pixel center x sits at (2x+1)/W - 1.
    const double sx = 2.0 / src_w;
    const double sy = 2.0 / src_h;
    std::size_t p = 0;
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x, ++p) {
            const Vec2 src = warp_point(h, {static_cast<double>(x),
                                            static_cast<double>(y)});
            grid[p * 2] = static_cast<float>((src.x + 0.5) * sx - 1.0);
            grid[p * 2 + 1] = static_cast<float>((src.y + 0.5) * sy - 1.0);
        }
    }
    return grid;
}

std::vector<float> grid_sample_plain(const float* img, int h, int w,
                                     const std::vector<float>& grid,
                                     int out_h, int out_w) {
    const std::size_t npix = static_cast<std::size_t>(out_h) * out_w;
    if (grid.size() != npix * 2)
        throw std::invalid_argument("grid_sample_plain: grid size mismatch");
    std::vector<float> out(npix, 0.0f);
    for (std::size_t p = 0; p < npix; ++p) {
        const float fx = (grid[p * 2] + 1.0f) * 0.5f * w - 0.5f;
        const float fy = (grid[p * 2 + 1] + 1.0f) * 0.5f * h - 0.5f;
        const int x0 = static_cast<int>(std::floor(fx));
        const int y0 = static_cast<int>(std::floor(fy));
        const float ax = fx - x0, ay = fy - y0;
        float acc = 0.0f;
        const float ws[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay,
                             ax * ay};
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int k = 0; k < 4; ++k) {
            if (xs[k] < 0 || xs[k] >= w || ys[k] < 0 || ys[k] >= h) continue;
            acc += ws[k] * img[ys[k] * w + xs[k]];
        }
        out[p] = acc;
    }
    return out;
}

}  // namespace remm
