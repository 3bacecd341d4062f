#include "remm/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace remm {

double signed_angle(double theta_deg) {
    double t = std::fmod(theta_deg, 360.0);
    if (t < 0) t += 360.0;
    return t > 180.0 ? t - 360.0 : t;
}

int angle_bucket(double signed_theta_deg) {
    const double t = signed_theta_deg;
    if (t >= -180.0 && t < -90.0) return 0;
    if (t < -30.0) return 1;
    if (t < 30.0) return 2;
    if (t < 90.0) return 3;
    if (t <= 180.0) return 4;
    throw std::invalid_argument("angle outside (-180,180]: " +
                                std::to_string(t));
}

std::string bucket_name(int bucket) {
    switch (bucket) {
        case 0: return "[-180:-90)";
        case 1: return "[-90:-30)";
        case 2: return "[-30:30)";
        case 3: return "[30:90)";
        case 4: return "[90:180]";
        default: throw std::invalid_argument("bad bucket index");
    }
}

std::string ScaleRange::tag() const {
    std::ostringstream os;
    os << "[" << lo << ".." << hi << "]";  // comma-free: tags land in CSVs
    return os.str();
}

const std::vector<ScaleRange>& benchmark_scale_ranges() {
    static const std::vector<ScaleRange> ranges = {
        {0.5, 0.8}, {0.8, 1.0}, {1.0, 1.0}};
    return ranges;
}

SynthesizedPair synthesize_pair(const ImageF& img_a, const ImageF& img_b,
                                double theta_deg, ScaleRange scale_range,
                                double translation_frac, std::uint64_t seed,
                                bool training_mode) {
    if (img_a.w != img_b.w || img_a.h != img_b.h)
        throw std::invalid_argument("synthesize_pair: input sizes differ");
    if (!training_mode) {
        const long t = std::lround(theta_deg);
        if (t < 10 || t > 350 || t % 10 != 0 ||
            std::abs(theta_deg - static_cast<double>(t)) > 1e-9)
            throw std::invalid_argument(
                "benchmark theta must be a multiple of 10 in [10,350], got " +
                std::to_string(theta_deg));
    }
    if (translation_frac < 0.0 || translation_frac > 0.2)
        throw std::invalid_argument("translation_frac must be in [0,0.2]");
    if (!(scale_range.lo > 0.0) || scale_range.hi < scale_range.lo)
        throw std::invalid_argument("bad scale range");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> sdist(scale_range.lo, scale_range.hi);
    const double scale =
        scale_range.lo == scale_range.hi ? scale_range.lo : sdist(rng);
    const double tmax = translation_frac * std::min(img_a.w, img_a.h);
    std::uniform_real_distribution<double> tdist(-tmax, tmax);
    const double tx = translation_frac > 0.0 ? tdist(rng) : 0.0;
    const double ty = translation_frac > 0.0 ? tdist(rng) : 0.0;

    const std::pair<double, double> center{(img_a.w - 1) / 2.0,
                                           (img_a.h - 1) / 2.0};
    SynthesizedPair out;
    out.gt = make_homography(theta_deg, scale, {tx, ty}, center);
    out.theta_deg = theta_deg;
    out.scale_draw = scale;
    out.x = img_a;
    // Y(q) = imgB(gt^-1 q): forward warp of the aligned modality-B image.
    const auto grid =
        affine_grid(out.gt.inverse(), img_b.h, img_b.w, img_b.h, img_b.w);
    out.y.w = img_b.w;
    out.y.h = img_b.h;
    out.y.px = grid_sample_plain(img_b.px.data(), img_b.h, img_b.w, grid,
                                 img_b.h, img_b.w);
    return out;
}

std::vector<BenchmarkPair> build_benchmark(
    const std::vector<std::pair<ImageF, ImageF>>& source_pairs,
    const std::string& out_dir, std::uint64_t seed, double translation_frac) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir))
        throw std::runtime_error("cannot create benchmark directory: " +
                                 out_dir);
    const auto& ranges = benchmark_scale_ranges();
    std::vector<BenchmarkPair> pairs;
    pairs.reserve(source_pairs.size() * 35 * ranges.size());
    for (std::size_t sp = 0; sp < source_pairs.size(); ++sp) {
        for (int angle = 10; angle <= 350; angle += 10) {
            for (std::size_t r = 0; r < ranges.size(); ++r) {
                const std::uint64_t sub_seed =
                    seed * 0x9e3779b97f4a7c15ull + sp * 1000003ull +
                    static_cast<std::uint64_t>(angle) * 101ull + r;
                auto synth =
                    synthesize_pair(source_pairs[sp].first,
                                    source_pairs[sp].second, angle, ranges[r],
                                    translation_frac, sub_seed);
                BenchmarkPair bp;
                std::ostringstream id;
                id << "p" << sp << "_a" << angle << "_s" << r;
                bp.id = id.str();
                bp.x_path = (fs::path(out_dir) / (bp.id + "_X.png")).string();
                bp.y_path = (fs::path(out_dir) / (bp.id + "_Y.png")).string();
                save_png_gray(bp.x_path, synth.x);
                save_png_gray(bp.y_path, synth.y);
                bp.gt = synth.gt;
                bp.theta_deg = angle;
                bp.scale_draw = synth.scale_draw;
                bp.scale_tag = ranges[r].tag();
                bp.bucket = angle_bucket(signed_angle(angle));
                pairs.push_back(std::move(bp));
            }
        }
    }
    return pairs;
}

void write_manifest(const std::string& path,
                    const std::vector<BenchmarkPair>& pairs) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest: " + path);
    os.precision(17);
    for (const auto& p : pairs) {
        os << p.id << "," << p.x_path << "," << p.y_path << ",";
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                os << (i || j ? " " : "") << p.gt.m[i][j];
        os << "," << p.theta_deg << "," << p.scale_draw << "," << p.scale_tag
           << "\n";
    }
    if (!os) throw std::runtime_error("manifest write failed: " + path);
}

std::vector<BenchmarkPair> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);
    std::vector<BenchmarkPair> pairs;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) fields.push_back(tok);
        if (fields.size() != 7)
            throw std::runtime_error("bad manifest line: " + line);
        BenchmarkPair bp;
        bp.id = fields[0];
        bp.x_path = fields[1];
        bp.y_path = fields[2];
        bp.theta_deg = std::stod(fields[4]);
        bp.gt = Homography::parse(fields[3] + " theta=" + fields[4]);
        bp.scale_draw = std::stod(fields[5]);
        bp.scale_tag = fields[6];
        bp.bucket = angle_bucket(signed_angle(bp.theta_deg));
        pairs.push_back(std::move(bp));
    }
    return pairs;
}

int ncm(const Correspondences& matches, const Homography& gt,
        double pixel_thresh) {
    int count = 0;
    for (const auto& [pa, pb] : matches) {
        const Vec2 proj = warp_point(gt, pa);
        const double dx = proj.x - pb.x, dy = proj.y - pb.y;
        if (std::sqrt(dx * dx + dy * dy) < pixel_thresh) ++count;
    }
    return count;
}

double rmse(const Correspondences& matches, const Homography& gt,
            double pixel_thresh) {
    double acc = 0.0;
    int count = 0;
    for (const auto& [pa, pb] : matches) {
        const Vec2 proj = warp_point(gt, pa);
        const double dx = proj.x - pb.x, dy = proj.y - pb.y;
        const double d2 = dx * dx + dy * dy;
        if (std::sqrt(d2) < pixel_thresh) {
            acc += d2;
            ++count;
        }
    }
    if (count <= kNcmSuccessThreshold) return kRmseFailureSentinel;
    return std::sqrt(acc / count);
}

std::vector<ReportRow> bucket_report(const std::vector<EvalRecord>& records) {
    std::vector<ReportRow> rows;
    if (records.empty()) return rows;
    auto aggregate = [&](const std::string& label, auto&& pred) {
        ReportRow row;
        row.label = label;
        double ncm_acc = 0.0, rmse_acc = 0.0, rmse_all_acc = 0.0;
        for (const auto& rec : records) {
            if (!pred(rec)) continue;
            ++row.total;
            rmse_all_acc +=
                rec.success ? rec.rmse : kRmseFailureSentinel;
            if (rec.success) {
                ++row.successes;
                ncm_acc += rec.ncm;
                rmse_acc += rec.rmse;
            }
        }
        if (row.total == 0) return row;
        row.sr = 100.0 * row.successes / row.total;
        row.mean_rmse_incl_fail = rmse_all_acc / row.total;
        if (row.successes > 0) {
            row.mean_ncm = ncm_acc / row.successes;
            row.mean_rmse = rmse_acc / row.successes;
        } else {
            row.mean_ncm = 0.0;
            row.mean_rmse = kRmseFailureSentinel;
        }
        return row;
    };
    for (int b = 0; b < 5; ++b)
        rows.push_back(aggregate(bucket_name(b), [b](const EvalRecord& r) {
            return r.bucket == b;
        }));
    rows.push_back(aggregate("all", [](const EvalRecord&) { return true; }));
    return rows;
}

void write_report_csv(const std::string& path,
                      const std::vector<ReportRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write report: " + path);
    os << "bucket,total,successes,ncm,rmse,rmse_incl_fail,sr\n";
    for (const auto& r : rows)
        os << r.label << "," << r.total << "," << r.successes << ","
           << r.mean_ncm << "," << r.mean_rmse << "," << r.mean_rmse_incl_fail
           << "," << r.sr << "\n";
}

ImageF make_texture(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    ImageF out;
    out.h = h;
    out.w = w;
    out.px.assign(static_cast<std::size_t>(h) * w, 0.0f);
    // Octaves of bilinearly upsampled value noise.
    const int cells[] = {4, 8, 16, 32};
    const float weights[] = {0.45f, 0.3f, 0.15f, 0.1f};
    for (int oct = 0; oct < 4; ++oct) {
        const int n = cells[oct];
        std::vector<float> grid(static_cast<std::size_t>(n + 1) * (n + 1));
        for (auto& v : grid) v = dist(rng);
        for (int y = 0; y < h; ++y) {
            const float fy = static_cast<float>(y) / h * n;
            const int y0 = static_cast<int>(fy);
            const float ay = fy - y0;
            for (int x = 0; x < w; ++x) {
                const float fx = static_cast<float>(x) / w * n;
                const int x0 = static_cast<int>(fx);
                const float ax = fx - x0;
                const float v00 = grid[static_cast<std::size_t>(y0) * (n + 1) + x0];
                const float v01 = grid[static_cast<std::size_t>(y0) * (n + 1) + x0 + 1];
                const float v10 = grid[static_cast<std::size_t>(y0 + 1) * (n + 1) + x0];
                const float v11 = grid[static_cast<std::size_t>(y0 + 1) * (n + 1) + x0 + 1];
                const float v = (1 - ay) * ((1 - ax) * v00 + ax * v01) +
                                ay * ((1 - ax) * v10 + ax * v11);
                out.at(x, y) += weights[oct] * v;
            }
        }
    }
    // Stretch to [0,1].
    const auto [mn, mx] = std::minmax_element(out.px.begin(), out.px.end());
    const float lo = *mn, span = std::max(*mx - *mn, 1e-6f);
    for (auto& v : out.px) v = (v - lo) / span;
    return out;
}

ImageF remap_modality(const ImageF& a, std::uint64_t seed,
                      double noise_sigma) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(noise_sigma));
    ImageF b = a;
    for (auto& v : b.px) {
        // Monotone nonlinear remap (gamma q-curve), then sensor noise.
        const float mapped = 0.1f + 0.8f * std::pow(v, 2.2f);
        v = std::clamp(mapped + noise(rng), 0.0f, 1.0f);
    }
    return b;
}

}  // namespace remm
