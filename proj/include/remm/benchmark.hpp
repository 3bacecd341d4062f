#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "remm/geometry.hpp"
#include "remm/image.hpp"

namespace remm {

// Five signed-rotation buckets matching the report table rows.
int angle_bucket(double signed_theta_deg);            // 0..4
double signed_angle(double theta_deg);                // (-180, 180]
std::string bucket_name(int bucket);

inline constexpr double kRmseFailureSentinel = 20.0;
inline constexpr int kNcmSuccessThreshold = 10;  // success means ncm > 10

struct ScaleRange {
    double lo = 1.0;
    double hi = 1.0;
    std::string tag() const;
};

// The three benchmark scale draws.
const std::vector<ScaleRange>& benchmark_scale_ranges();

struct BenchmarkPair {
    std::string id;
    std::string x_path;
    std::string y_path;
    Homography gt;  // maps X pixel coordinates to Y pixel coordinates
    double theta_deg = 0.0;
    double scale_draw = 1.0;
    std::string scale_tag;
    int bucket = 2;
};

struct SynthesizedPair {
    ImageF x;
    ImageF y;
    Homography gt;
    double theta_deg = 0.0;
    double scale_draw = 1.0;
};

// Warp the aligned modality-B image by a rotation/scale/translation draw.
// theta must be a multiple of 10 in [10,350] unless training_mode, which
// admits any finite angle (the training loop draws its own).
SynthesizedPair synthesize_pair(const ImageF& img_a, const ImageF& img_b,
                                double theta_deg, ScaleRange scale_range,
                                double translation_frac, std::uint64_t seed,
                                bool training_mode = false);

// 35 angles x 3 scale ranges = 105 benchmark pairs per source pair. Writes
// X/Y PNGs under out_dir and returns the manifest entries in order.
std::vector<BenchmarkPair> build_benchmark(
    const std::vector<std::pair<ImageF, ImageF>>& source_pairs,
    const std::string& out_dir, std::uint64_t seed,
    double translation_frac = 0.1);

void write_manifest(const std::string& path,
                    const std::vector<BenchmarkPair>& pairs);
std::vector<BenchmarkPair> read_manifest(const std::string& path);

// --- metrics (correspondences are (point in X, point in Y) pixel pairs) ---

using Correspondences = std::vector<std::pair<Vec2, Vec2>>;

int ncm(const Correspondences& matches, const Homography& gt,
        double pixel_thresh);
// RMSE over correct matches; kRmseFailureSentinel when ncm <= 10.
double rmse(const Correspondences& matches, const Homography& gt,
            double pixel_thresh);

struct EvalRecord {
    std::string pair_id;
    int ncm = 0;
    double rmse = kRmseFailureSentinel;
    bool success = false;
    int bucket = 2;
    double seconds = 0.0;
};

struct ReportRow {
    std::string label;
    int total = 0;
    int successes = 0;
    double mean_ncm = 0.0;            // over successes, 0 if none
    double mean_rmse = kRmseFailureSentinel;  // over successes, 20 if none
    double mean_rmse_incl_fail = kRmseFailureSentinel;  // sentinel-filled
    double sr = 0.0;                  // percent
};

// One row per bucket plus a trailing global row.
std::vector<ReportRow> bucket_report(const std::vector<EvalRecord>& records);
void write_report_csv(const std::string& path,
                      const std::vector<ReportRow>& rows);

// --- synthetic multimodal data (training and acceptance runs) ---

// Band-limited random texture in [0,1].
ImageF make_texture(int h, int w, std::uint64_t seed);
// Modality B: monotone nonlinear intensity remap of A plus additive noise.
ImageF remap_modality(const ImageF& a, std::uint64_t seed,
                      double noise_sigma = 0.02);

}  // namespace remm
