#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "remm/benchmark.hpp"
#include "remm/cyclic_shift.hpp"
#include "remm/geometry.hpp"
#include "remm/image.hpp"
#include "remm/net.hpp"

namespace remm {

struct Keypoint {
    float x = 0.0f;  // original-image pixel coordinates
    float y = 0.0f;
    float score = 0.0f;
    float scale = 1.0f;  // pyramid level the point was found at
};

struct Match {
    int ia = -1;
    int ib = -1;
    float similarity = 0.0f;
    int shift_a = 0;  // winning cyclic-shift pair
    int shift_b = 0;
};

struct MatchSet {
    std::vector<Match> pairs;
    std::optional<Homography> estimated_h;
    std::vector<bool> inlier_flags;  // parallel to pairs when estimated
};

// Keypoints plus their unit descriptors, one dim-length row per keypoint.
struct ExtractionResult {
    std::vector<Keypoint> keypoints;
    std::vector<float> descriptors;  // row-major [n x dim]
    int dim = 128;

    const float* descriptor(int i) const {
        return descriptors.data() + static_cast<std::size_t>(i) * dim;
    }
};

// Strict local maxima of a [H,W] score map within an odd window, sorted by
// descending score (row-major index breaks ties), truncated to k.
std::vector<Keypoint> nms_topk(const float* scores, int h, int w, int window,
                               int k);

struct ExtractParams {
    std::vector<double> scales = {0.5, 0.707, 1.0, 1.414};
    int max_keypoints = 5000;
    int nms_window = 5;
};

// Multi-scale extraction: per-level features + NMS, coordinates mapped back
// to the original resolution, global top-k by score. Levels smaller than the
// network minimum are skipped.
ExtractionResult multiscale_extract(const ImageF& image, const RemmNet& net,
                                    Modality modality,
                                    const ExtractParams& params);

// Shift-expanded descriptor variants of one extraction side.
struct ExpandedDescriptors {
    std::vector<float> variants;   // row-major [total x dim]
    std::vector<int> offsets;      // per keypoint: first variant row; size n+1
    std::vector<int> shift_of;     // per variant row: its shift value
    int dim = 128;
};

ExpandedDescriptors expand_for_matching(const ExtractionResult& extraction,
                                        int g_size, TopKMode mode,
                                        double ratio);

// Mutual nearest neighbors where keypoint similarity is the max cosine
// similarity over all shift-variant pairs.
MatchSet match_mutual_nn(const ExpandedDescriptors& desc_a,
                         const ExpandedDescriptors& desc_b, float min_sim);

// 4-point DLT RANSAC + least-squares refit on the consensus set. With fewer
// than 4 matches the set is returned unestimated, all flags false.
void ransac_homography(const std::vector<Keypoint>& kps_a,
                       const std::vector<Keypoint>& kps_b, MatchSet& matches,
                       double inlier_px, int max_iters, std::uint64_t seed);

Correspondences to_correspondences(const std::vector<Keypoint>& kps_a,
                                   const std::vector<Keypoint>& kps_b,
                                   const MatchSet& matches,
                                   bool inliers_only = false);

// --- REMMDESC1 descriptor files and match CSVs ---

void save_descriptors(const std::string& path, const ExtractionResult& ext,
                      int g_size);
ExtractionResult load_descriptors(const std::string& path, int* g_size = nullptr);

void save_matches_csv(const std::string& path,
                      const std::vector<Keypoint>& kps_a,
                      const std::vector<Keypoint>& kps_b,
                      const MatchSet& matches);
// Reads back (xA,yA,xB,yB,similarity,inlier) rows.
struct MatchRow {
    double xa, ya, xb, yb, similarity;
    bool inlier;
};
std::vector<MatchRow> load_matches_csv(const std::string& path);

}  // namespace remm
