#include "remm/pipeline.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "remm/kernels.hpp"

namespace remm {

std::vector<Keypoint> nms_topk(const float* scores, int h, int w, int window,
                               int k) {
    if (window < 3 || window % 2 == 0)
        throw std::invalid_argument("nms window must be odd and >= 3");
    if (k < 1) throw std::invalid_argument("nms k must be >= 1");
    const int r = window / 2;
    std::vector<Keypoint> found;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float v = scores[y * w + x];
            bool is_max = true;
            for (int dy = -r; dy <= r && is_max; ++dy) {
                const int ny = y + dy;
                if (ny < 0 || ny >= h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx;
                    if (nx < 0 || nx >= w) continue;
                    if (scores[ny * w + nx] >= v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max)
                found.push_back({static_cast<float>(x), static_cast<float>(y),
                                 v, 1.0f});
        }
    }
    std::stable_sort(found.begin(), found.end(),
                     [](const Keypoint& a, const Keypoint& b) {
                         return a.score > b.score;
                     });
    if (static_cast<int>(found.size()) > k) found.resize(static_cast<std::size_t>(k));
    return found;
}

namespace {

// Bilinear read of one descriptor column vector from a [C,H,W] map.
void sample_descriptor(const float* desc, int c, int h, int w, float fx,
                       float fy, float* out) {
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const float ax = fx - x0, ay = fy - y0;
    const float ws[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay,
                         ax * ay};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    const int plane = h * w;
    std::memset(out, 0, sizeof(float) * static_cast<std::size_t>(c));
    for (int t = 0; t < 4; ++t) {
        if (xs[t] < 0 || xs[t] >= w || ys[t] < 0 || ys[t] >= h) continue;
        const float wt = ws[t];
        const float* base = desc + ys[t] * w + xs[t];
        for (int ch = 0; ch < c; ++ch) out[ch] += wt * base[ch * plane];
    }
}

constexpr int kNetMinSide = 32;

}  // namespace

ExtractionResult multiscale_extract(const ImageF& image, const RemmNet& net,
                                    Modality modality,
                                    const ExtractParams& params) {
    if (params.scales.empty())
        throw std::invalid_argument("multiscale_extract: no scales given");
    const int dim = net.config().descriptor_dim();
    std::vector<Keypoint> all_kps;
    std::vector<float> all_descs;
    for (double s : params.scales) {
        if (!(s > 0.0))
            throw std::invalid_argument("scale factors must be > 0");
        const int sh = std::max(1, static_cast<int>(std::lround(image.h * s)));
        const int sw = std::max(1, static_cast<int>(std::lround(image.w * s)));
        if (sh < kNetMinSide || sw < kNetMinSide) {
            std::cerr << "warning: skipping scale " << s
                      << " (level " << sw << "x" << sh << " below network minimum)\n";
            continue;
        }
        ImageF level = (sh == image.h && sw == image.w)
                           ? image
                           : resize_bilinear(image, sh, sw);
        Tensor img = Tensor::from_data({sh, sw}, level.px);
        DenseFeatures feat = net.extract_features(img, modality);
        auto kps = nms_topk(feat.scores.data(), sh, sw, params.nms_window,
                            params.max_keypoints);
        std::vector<float> d(static_cast<std::size_t>(dim));
        for (auto& kp : kps) {
            sample_descriptor(feat.desc.data(), dim, sh, sw, kp.x, kp.y,
                              d.data());
            kernels::l2_normalize_rows(d.data(), 1, dim);
            all_descs.insert(all_descs.end(), d.begin(), d.end());
            kp.x = static_cast<float>(kp.x / s);
            kp.y = static_cast<float>(kp.y / s);
            kp.scale = static_cast<float>(s);
            all_kps.push_back(kp);
        }
    }
    // Global top-k across levels.
    std::vector<int> order(all_kps.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return all_kps[static_cast<std::size_t>(a)].score >
               all_kps[static_cast<std::size_t>(b)].score;
    });
    if (static_cast<int>(order.size()) > params.max_keypoints)
        order.resize(static_cast<std::size_t>(params.max_keypoints));
    ExtractionResult out;
    out.dim = dim;
    out.keypoints.reserve(order.size());
    out.descriptors.reserve(order.size() * static_cast<std::size_t>(dim));
    for (int idx : order) {
        out.keypoints.push_back(all_kps[static_cast<std::size_t>(idx)]);
        const float* src =
            all_descs.data() + static_cast<std::size_t>(idx) * dim;
        out.descriptors.insert(out.descriptors.end(), src, src + dim);
    }
    return out;
}

ExpandedDescriptors expand_for_matching(const ExtractionResult& extraction,
                                        int g_size, TopKMode mode,
                                        double ratio) {
    ExpandedDescriptors out;
    out.dim = extraction.dim;
    const int n = static_cast<int>(extraction.keypoints.size());
    out.offsets.reserve(static_cast<std::size_t>(n) + 1);
    out.offsets.push_back(0);
    for (int i = 0; i < n; ++i) {
        std::vector<float> d(extraction.descriptor(i),
                             extraction.descriptor(i) + extraction.dim);
        GroupedDescriptor gd = group(d, g_size);
        ShiftSet shifts = topk_shift_values(gd, mode, ratio);
        auto variants = expand_descriptors(gd, shifts);
        for (std::size_t v = 0; v < variants.size(); ++v) {
            out.variants.insert(out.variants.end(), variants[v].begin(),
                                variants[v].end());
            out.shift_of.push_back(shifts.shifts[v]);
        }
        out.offsets.push_back(static_cast<int>(out.shift_of.size()));
    }
    return out;
}

MatchSet match_mutual_nn(const ExpandedDescriptors& desc_a,
                         const ExpandedDescriptors& desc_b, float min_sim) {
    MatchSet out;
    const int na = static_cast<int>(desc_a.offsets.size()) - 1;
    const int nb = static_cast<int>(desc_b.offsets.size()) - 1;
    if (na <= 0 || nb <= 0) return out;
    const int dim = desc_a.dim;
    const int va = static_cast<int>(desc_a.shift_of.size());
    const int vb = static_cast<int>(desc_b.shift_of.size());

    // Per-keypoint max over the variant-level similarity matrix, computed in
    // row blocks of A variants.
    std::vector<float> sim(static_cast<std::size_t>(na) * nb,
                           -std::numeric_limits<float>::infinity());
    std::vector<std::pair<int, int>> win(static_cast<std::size_t>(na) * nb,
                                         {0, 0});
    // variant row -> owning keypoint
    std::vector<int> owner_a(static_cast<std::size_t>(va));
    for (int i = 0; i < na; ++i)
        for (int v = desc_a.offsets[static_cast<std::size_t>(i)];
             v < desc_a.offsets[static_cast<std::size_t>(i) + 1]; ++v)
            owner_a[static_cast<std::size_t>(v)] = i;
    std::vector<int> owner_b(static_cast<std::size_t>(vb));
    for (int j = 0; j < nb; ++j)
        for (int v = desc_b.offsets[static_cast<std::size_t>(j)];
             v < desc_b.offsets[static_cast<std::size_t>(j) + 1]; ++v)
            owner_b[static_cast<std::size_t>(v)] = j;

    const int block = 512;
    std::vector<float> s(static_cast<std::size_t>(block) * vb);
    for (int row0 = 0; row0 < va; row0 += block) {
        const int rows = std::min(block, va - row0);
        kernels::sgemm_nt(rows, vb, dim,
                          desc_a.variants.data() +
                              static_cast<std::size_t>(row0) * dim,
                          dim, desc_b.variants.data(), dim, s.data(), vb);
        for (int r = 0; r < rows; ++r) {
            const int i = owner_a[static_cast<std::size_t>(row0 + r)];
            const int sa = desc_a.shift_of[static_cast<std::size_t>(row0 + r)];
            const float* srow = s.data() + static_cast<std::size_t>(r) * vb;
            for (int v = 0; v < vb; ++v) {
                const int j = owner_b[static_cast<std::size_t>(v)];
                float& cur = sim[static_cast<std::size_t>(i) * nb + j];
                if (srow[v] > cur) {
                    cur = srow[v];
                    win[static_cast<std::size_t>(i) * nb + j] = {
                        sa, desc_b.shift_of[static_cast<std::size_t>(v)]};
                }
            }
        }
    }

    std::vector<int> best_b(static_cast<std::size_t>(na), -1);
    for (int i = 0; i < na; ++i) {
        const float* row = sim.data() + static_cast<std::size_t>(i) * nb;
        best_b[static_cast<std::size_t>(i)] =
            static_cast<int>(std::max_element(row, row + nb) - row);
    }
    std::vector<int> best_a(static_cast<std::size_t>(nb), -1);
    for (int j = 0; j < nb; ++j) {
        int arg = 0;
        float best = -std::numeric_limits<float>::infinity();
        for (int i = 0; i < na; ++i) {
            const float v = sim[static_cast<std::size_t>(i) * nb + j];
            if (v > best) {
                best = v;
                arg = i;
            }
        }
        best_a[static_cast<std::size_t>(j)] = arg;
    }
    for (int i = 0; i < na; ++i) {
        const int j = best_b[static_cast<std::size_t>(i)];
        if (best_a[static_cast<std::size_t>(j)] != i) continue;
        const float v = sim[static_cast<std::size_t>(i) * nb + j];
        if (v < min_sim) continue;
        const auto [sa, sb] = win[static_cast<std::size_t>(i) * nb + j];
        out.pairs.push_back({i, j, v, sa, sb});
    }
    return out;
}

namespace {

// Hartley-normalized DLT from >= 4 correspondences.
std::optional<Homography> dlt_homography(const Correspondences& pts) {
    const int n = static_cast<int>(pts.size());
    if (n < 4) return std::nullopt;
    auto normalizer = [](const std::vector<Vec2>& ps) {
        Vec2 c{0, 0};
        for (const auto& p : ps) {
            c.x += p.x;
            c.y += p.y;
        }
        c.x /= ps.size();
        c.y /= ps.size();
        double mean_d = 0.0;
        for (const auto& p : ps)
            mean_d += std::hypot(p.x - c.x, p.y - c.y);
        mean_d /= ps.size();
        const double s = mean_d > 1e-12 ? std::sqrt(2.0) / mean_d : 1.0;
        Eigen::Matrix3d t;
        t << s, 0, -s * c.x, 0, s, -s * c.y, 0, 0, 1;
        return t;
    };
    std::vector<Vec2> pa, pb;
    pa.reserve(pts.size());
    pb.reserve(pts.size());
    for (const auto& [a, b] : pts) {
        pa.push_back(a);
        pb.push_back(b);
    }
    const Eigen::Matrix3d ta = normalizer(pa);
    const Eigen::Matrix3d tb = normalizer(pb);

    Eigen::MatrixXd a(2 * n, 9);
    for (int i = 0; i < n; ++i) {
        const double x = ta(0, 0) * pa[static_cast<std::size_t>(i)].x + ta(0, 2);
        const double y = ta(1, 1) * pa[static_cast<std::size_t>(i)].y + ta(1, 2);
        const double u = tb(0, 0) * pb[static_cast<std::size_t>(i)].x + tb(0, 2);
        const double v = tb(1, 1) * pb[static_cast<std::size_t>(i)].y + tb(1, 2);
        a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    const Eigen::Matrix3d hm = tb.inverse() * hn * ta;
    if (std::abs(hm(2, 2)) < 1e-12 || std::abs(hm.determinant()) < 1e-12)
        return std::nullopt;
    std::array<std::array<double, 3>, 3> m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = hm(i, j);
    try {
        return Homography::from_matrix(m);
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
}

}  // namespace

void ransac_homography(const std::vector<Keypoint>& kps_a,
                       const std::vector<Keypoint>& kps_b, MatchSet& matches,
                       double inlier_px, int max_iters, std::uint64_t seed) {
    matches.estimated_h.reset();
    matches.inlier_flags.assign(matches.pairs.size(), false);
    const int n = static_cast<int>(matches.pairs.size());
    if (n < 4) return;

    Correspondences all;
    all.reserve(matches.pairs.size());
    for (const auto& m : matches.pairs)
        all.emplace_back(
            Vec2{kps_a[static_cast<std::size_t>(m.ia)].x,
                 kps_a[static_cast<std::size_t>(m.ia)].y},
            Vec2{kps_b[static_cast<std::size_t>(m.ib)].x,
                 kps_b[static_cast<std::size_t>(m.ib)].y});

    auto count_inliers = [&](const Homography& h, std::vector<bool>* flags) {
        int count = 0;
        for (std::size_t i = 0; i < all.size(); ++i) {
            const Vec2 proj = warp_point(h, all[i].first);
            const double err =
                std::hypot(proj.x - all[i].second.x, proj.y - all[i].second.y);
            const bool in = err < inlier_px;
            if (flags) (*flags)[i] = in;
            if (in) ++count;
        }
        return count;
    };

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    int best_count = 0;
    Homography best_h;
    bool have_best = false;
    for (int it = 0; it < max_iters; ++it) {
        int idx[4];
        for (int t = 0; t < 4; ++t) {
            bool fresh;
            do {
                idx[t] = pick(rng);
                fresh = true;
                for (int u = 0; u < t; ++u) fresh = fresh && idx[u] != idx[t];
            } while (!fresh);
        }
        Correspondences sample;
        for (int t = 0; t < 4; ++t) sample.push_back(all[static_cast<std::size_t>(idx[t])]);
        const auto h = dlt_homography(sample);
        if (!h) continue;
        const int count = count_inliers(*h, nullptr);
        if (count > best_count) {
            best_count = count;
            best_h = *h;
            have_best = true;
        }
    }
    if (!have_best || best_count < 4) return;

    // Refit on the consensus set.
    std::vector<bool> flags(all.size(), false);
    count_inliers(best_h, &flags);
    Correspondences inliers;
    for (std::size_t i = 0; i < all.size(); ++i)
        if (flags[i]) inliers.push_back(all[i]);
    if (const auto refit = dlt_homography(inliers)) {
        if (count_inliers(*refit, nullptr) >= best_count) best_h = *refit;
    }
    count_inliers(best_h, &flags);
    matches.estimated_h = best_h;
    matches.inlier_flags = std::move(flags);
}

Correspondences to_correspondences(const std::vector<Keypoint>& kps_a,
                                   const std::vector<Keypoint>& kps_b,
                                   const MatchSet& matches,
                                   bool inliers_only) {
    Correspondences out;
    for (std::size_t i = 0; i < matches.pairs.size(); ++i) {
        if (inliers_only &&
            (matches.inlier_flags.size() != matches.pairs.size() ||
             !matches.inlier_flags[i]))
            continue;
        const auto& m = matches.pairs[i];
        out.emplace_back(Vec2{kps_a[static_cast<std::size_t>(m.ia)].x,
                              kps_a[static_cast<std::size_t>(m.ia)].y},
                         Vec2{kps_b[static_cast<std::size_t>(m.ib)].x,
                              kps_b[static_cast<std::size_t>(m.ib)].y});
    }
    return out;
}

// --- file formats ---

namespace {

constexpr char kDescMagic[] = "REMMDESC1";

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("truncated descriptor file");
    return v;
}

}  // namespace

void save_descriptors(const std::string& path, const ExtractionResult& ext,
                      int g_size) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write descriptors: " + path);
    os.write(kDescMagic, 9);
    put(os, static_cast<std::uint32_t>(ext.keypoints.size()));
    put(os, static_cast<std::uint16_t>(g_size));
    put(os, static_cast<std::uint16_t>(ext.dim));
    for (std::size_t i = 0; i < ext.keypoints.size(); ++i) {
        const auto& kp = ext.keypoints[i];
        put(os, kp.x);
        put(os, kp.y);
        put(os, kp.score);
        put(os, kp.scale);
        os.write(reinterpret_cast<const char*>(
                     ext.descriptors.data() + i * static_cast<std::size_t>(ext.dim)),
                 static_cast<std::streamsize>(sizeof(float) * ext.dim));
    }
    if (!os) throw std::runtime_error("descriptor write failed: " + path);
}

ExtractionResult load_descriptors(const std::string& path, int* g_size) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open descriptors: " + path);
    char magic[9];
    is.read(magic, 9);
    if (!is || std::memcmp(magic, kDescMagic, 9) != 0)
        throw std::runtime_error("bad descriptor file magic: " + path);
    const auto count = get<std::uint32_t>(is);
    const auto g = get<std::uint16_t>(is);
    const auto dim = get<std::uint16_t>(is);
    if (g_size) *g_size = g;
    ExtractionResult out;
    out.dim = dim;
    out.keypoints.resize(count);
    out.descriptors.resize(static_cast<std::size_t>(count) * dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto& kp = out.keypoints[i];
        kp.x = get<float>(is);
        kp.y = get<float>(is);
        kp.score = get<float>(is);
        kp.scale = get<float>(is);
        is.read(reinterpret_cast<char*>(out.descriptors.data() +
                                        static_cast<std::size_t>(i) * dim),
                static_cast<std::streamsize>(sizeof(float) * dim));
        if (!is) throw std::runtime_error("truncated descriptor file: " + path);
    }
    return out;
}

void save_matches_csv(const std::string& path,
                      const std::vector<Keypoint>& kps_a,
                      const std::vector<Keypoint>& kps_b,
                      const MatchSet& matches) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write matches: " + path);
    os << "xA,yA,xB,yB,similarity,inlier\n";
    os.precision(9);
    for (std::size_t i = 0; i < matches.pairs.size(); ++i) {
        const auto& m = matches.pairs[i];
        const bool inl = i < matches.inlier_flags.size() && matches.inlier_flags[i];
        os << kps_a[static_cast<std::size_t>(m.ia)].x << ","
           << kps_a[static_cast<std::size_t>(m.ia)].y << ","
           << kps_b[static_cast<std::size_t>(m.ib)].x << ","
           << kps_b[static_cast<std::size_t>(m.ib)].y << "," << m.similarity
           << "," << (inl ? 1 : 0) << "\n";
    }
}

std::vector<MatchRow> load_matches_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open matches: " + path);
    std::vector<MatchRow> rows;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        MatchRow r{};
        char comma;
        int inl = 0;
        if (!(ss >> r.xa >> comma >> r.ya >> comma >> r.xb >> comma >> r.yb >>
              comma >> r.similarity >> comma >> inl))
            throw std::runtime_error("bad match row: " + line);
        r.inlier = inl != 0;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace remm
