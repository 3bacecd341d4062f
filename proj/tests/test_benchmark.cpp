#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <vector>

#include "remm/benchmark.hpp"

using namespace remm;

namespace fs = std::filesystem;

namespace {

std::vector<std::pair<ImageF, ImageF>> sources(int n, int size = 64) {
    std::vector<std::pair<ImageF, ImageF>> out;
    for (int i = 0; i < n; ++i) {
        ImageF a = make_texture(size, size, 1000 + i);
        out.emplace_back(a, remap_modality(a, 2000 + i));
    }
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is),
            std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("angle buckets partition the signed range") {
    CHECK(bucket_name(0) == "[-180:-90)");
    CHECK(bucket_name(4) == "[90:180]");
    for (int theta = 10; theta <= 350; theta += 10) {
        const double s = signed_angle(theta);
        CHECK(s > -180.0);
        CHECK(s <= 180.0);
        const int b = angle_bucket(s);
        CHECK(b >= 0);
        CHECK(b <= 4);
    }
    CHECK(angle_bucket(signed_angle(350.0)) == 2);   // -10 deg
    CHECK(angle_bucket(signed_angle(200.0)) == 0);   // -160 deg
    CHECK(angle_bucket(signed_angle(60.0)) == 3);
    CHECK(angle_bucket(signed_angle(180.0)) == 4);
    CHECK(angle_bucket(signed_angle(100.0)) == 4);
    CHECK(angle_bucket(signed_angle(270.0)) == 1);   // -90 in [-90,-30)? no
    // -90 belongs to [-90:-30).
    CHECK(angle_bucket(-90.0) == 1);
    CHECK(angle_bucket(-180.0 + 1e-9) == 0);
}

TEST_CASE("synthesize_pair determinism and pure-rotation ground truth") {
    auto src = sources(1);
    SynthesizedPair p1 = synthesize_pair(src[0].first, src[0].second, 90.0,
                                         {1.0, 1.0}, 0.0, 42);
    SynthesizedPair p2 = synthesize_pair(src[0].first, src[0].second, 90.0,
                                         {1.0, 1.0}, 0.0, 42);
    CHECK(p1.y.px == p2.y.px);
    CHECK(p1.gt.serialize() == p2.gt.serialize());

    // Pure rotation: gt equals make_homography about the image center.
    Homography expect = make_homography(
        90.0, 1.0, {0.0, 0.0}, {(64 - 1) / 2.0, (64 - 1) / 2.0});
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(p1.gt.m[r][c] == doctest::Approx(expect.m[r][c]).epsilon(1e-9));
    CHECK(p1.theta_deg == 90.0);
    CHECK(p1.scale_draw == 1.0);

    // Angle validation outside training mode.
    CHECK_THROWS_AS(
        synthesize_pair(src[0].first, src[0].second, 95.0, {1.0, 1.0}, 0.0, 1),
        std::invalid_argument);
    CHECK_THROWS_AS(
        synthesize_pair(src[0].first, src[0].second, 0.0, {1.0, 1.0}, 0.0, 1),
        std::invalid_argument);
    // ...but any finite angle is fine in training mode.
    synthesize_pair(src[0].first, src[0].second, 95.5, {1.0, 1.0}, 0.0, 1,
                    true);
}

TEST_CASE("synthesized Y agrees with direct sampling through gt") {
    auto src = sources(1);
    SynthesizedPair p = synthesize_pair(src[0].first, src[0].second, 30.0,
                                        {0.8, 1.0}, 0.05, 77);
    const ImageF& b = src[0].second;
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> d(12.0, 52.0);
    int checked = 0;
    for (int i = 0; i < 50; ++i) {
        const Vec2 x{d(rng), d(rng)};
        const Vec2 y = warp_point(p.gt, x);
        const int yx = (int)std::lround(y.x), yy = (int)std::lround(y.y);
        if (yx < 2 || yy < 2 || yx >= 62 || yy >= 62) continue;
        // gt maps X coords to Y coords; Y at gt(x) shows imgB near x.
        const Vec2 back = warp_point(p.gt.inverse(), {(double)yx, (double)yy});
        const int bx = (int)std::lround(back.x), by = (int)std::lround(back.y);
        if (bx < 1 || by < 1 || bx >= 63 || by >= 63) continue;
        // Bilinear tolerance: compare against the local neighborhood range.
        float lo = 1e9f, hi = -1e9f;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                lo = std::min(lo, b.at(bx + dx, by + dy));
                hi = std::max(hi, b.at(bx + dx, by + dy));
            }
        CHECK(p.y.at(yx, yy) >= lo - 0.02f);
        CHECK(p.y.at(yx, yy) <= hi + 0.02f);
        ++checked;
    }
    CHECK(checked > 20);
}

TEST_CASE("build_benchmark counts and angle multiset") {
    const auto dir = fs::temp_directory_path() / "remm_bench_test";
    fs::remove_all(dir);
    auto pairs = build_benchmark(sources(1), (dir / "images").string(), 9, 0.1);
    CHECK(pairs.size() == 105);  // 35 angles x 3 scale ranges

    std::map<int, int> angle_count;
    for (const auto& p : pairs) {
        angle_count[(int)p.theta_deg]++;
        CHECK(fs::exists(p.x_path));
        CHECK(fs::exists(p.y_path));
        // scale_draw inside its tagged range
        bool found = false;
        for (const auto& r : benchmark_scale_ranges())
            if (r.tag() == p.scale_tag) {
                CHECK(p.scale_draw >= r.lo - 1e-12);
                CHECK(p.scale_draw <= r.hi + 1e-12);
                found = true;
            }
        CHECK(found);
    }
    REQUIRE(angle_count.size() == 35);
    for (int theta = 10; theta <= 350; theta += 10)
        CHECK(angle_count[theta] == 3);

    auto two = build_benchmark(sources(2), (dir / "images2").string(), 9, 0.1);
    CHECK(two.size() == 210);
    fs::remove_all(dir);
}

TEST_CASE("benchmark determinism: same sources and seed, same manifest") {
    const auto dir = fs::temp_directory_path() / "remm_bench_det";
    fs::remove_all(dir);
    auto p1 = build_benchmark(sources(1), (dir / "a").string(), 4, 0.1);
    auto p2 = build_benchmark(sources(1), (dir / "b").string(), 4, 0.1);
    write_manifest((dir / "m1.txt").string(), p1);
    write_manifest((dir / "m2.txt").string(), p2);
    std::string m1 = slurp((dir / "m1.txt").string());
    std::string m2 = slurp((dir / "m2.txt").string());
    // Manifests differ only in the output directory component.
    size_t pos;
    while ((pos = m1.find("/a/")) != std::string::npos) m1.replace(pos, 3, "/");
    while ((pos = m2.find("/b/")) != std::string::npos) m2.replace(pos, 3, "/");
    CHECK(m1 == m2);

    // PNG payloads are byte-identical too.
    CHECK(slurp(p1[17].y_path) == slurp(p2[17].y_path));
    fs::remove_all(dir);
}

TEST_CASE("manifest round trip") {
    const auto dir = fs::temp_directory_path() / "remm_manifest_rt";
    fs::remove_all(dir);
    auto pairs = build_benchmark(sources(1), (dir / "images").string(), 3, 0.1);
    write_manifest((dir / "m.txt").string(), pairs);
    auto back = read_manifest((dir / "m.txt").string());
    REQUIRE(back.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(back[i].id == pairs[i].id);
        CHECK(back[i].theta_deg == pairs[i].theta_deg);
        CHECK(back[i].bucket == pairs[i].bucket);
        CHECK(back[i].scale_tag == pairs[i].scale_tag);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(back[i].gt.m[r][c] ==
                      doctest::Approx(pairs[i].gt.m[r][c]).epsilon(1e-12));
    }
    fs::remove_all(dir);
}

TEST_CASE("ncm examples and threshold scan oracle") {
    Homography gt = make_homography(25.0, 0.9, {2.0, 3.0}, {32.0, 32.0});
    Correspondences exact;
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> d(5.0, 60.0);
    for (int i = 0; i < 25; ++i) {
        const Vec2 p{d(rng), d(rng)};
        exact.emplace_back(p, warp_point(gt, p));
    }
    CHECK(ncm(exact, gt, 3.0) == 25);
    CHECK(ncm({}, gt, 3.0) == 0);

    // Perturb with known magnitudes straddling the threshold.
    std::uniform_real_distribution<double> mag(0.0, 6.0);
    std::uniform_real_distribution<double> dir(0.0, 6.283185307);
    Correspondences noisy;
    int expect = 0;
    for (int i = 0; i < 200; ++i) {
        const Vec2 p{d(rng), d(rng)};
        Vec2 q = warp_point(gt, p);
        const double m = mag(rng), a = dir(rng);
        q.x += m * std::cos(a);
        q.y += m * std::sin(a);
        noisy.emplace_back(p, q);
        if (m < 3.0) ++expect;
    }
    CHECK(ncm(noisy, gt, 3.0) == expect);
    // Monotone in the threshold.
    int prev = 0;
    for (double t : {0.5, 1.0, 2.0, 4.0, 8.0}) {
        const int c = ncm(noisy, gt, t);
        CHECK(c >= prev);
        prev = c;
    }
}

TEST_CASE("rmse strictness and closed-form oracle") {
    Homography id = Homography::identity();
    Correspondences matches;
    // 12 correct matches with residuals {1,1,2,2,1,1,2,2,1,1,2,2}.
    for (int i = 0; i < 12; ++i) {
        const double r = (i % 4 < 2) ? 1.0 : 2.0;
        matches.emplace_back(Vec2{10.0 + 5 * i, 20.0},
                             Vec2{10.0 + 5 * i + r, 20.0});
    }
    CHECK(ncm(matches, id, 3.0) == 12);
    const double expect = std::sqrt((6 * 1.0 + 6 * 4.0) / 12.0);
    CHECK(rmse(matches, id, 3.0) == doctest::Approx(expect).epsilon(1e-9));

    // Exactly 10 correct matches: not > 10, sentinel applies.
    Correspondences ten(matches.begin(), matches.begin() + 10);
    CHECK(ncm(ten, id, 3.0) == 10);
    CHECK(rmse(ten, id, 3.0) == kRmseFailureSentinel);

    Correspondences exact;
    for (int i = 0; i < 15; ++i)
        exact.emplace_back(Vec2{(double)i, 2.0}, Vec2{(double)i, 2.0});
    CHECK(rmse(exact, id, 3.0) == doctest::Approx(0.0));
}

TEST_CASE("bucket_report aggregation") {
    std::vector<EvalRecord> recs;
    for (int b = 0; b < 5; ++b) {
        EvalRecord r;
        r.pair_id = "p" + std::to_string(b);
        r.bucket = b;
        r.ncm = 100;
        r.rmse = 1.0;
        r.success = true;
        recs.push_back(r);
    }
    auto rows = bucket_report(recs);
    REQUIRE(rows.size() == 6);  // 5 buckets + global
    for (const auto& r : rows) {
        CHECK(r.mean_ncm == doctest::Approx(100.0));
        CHECK(r.mean_rmse == doctest::Approx(1.0));
        CHECK(r.sr == doctest::Approx(100.0));
    }
    CHECK(rows.back().label == "all");

    // A bucket with zero successes reports sentinel RMSE and SR 0.
    std::vector<EvalRecord> fails;
    EvalRecord f;
    f.bucket = 2;
    f.ncm = 3;
    f.rmse = kRmseFailureSentinel;
    f.success = false;
    fails.push_back(f);
    auto frows = bucket_report(fails);
    CHECK(frows[2].sr == doctest::Approx(0.0));
    CHECK(frows[2].mean_rmse == doctest::Approx(kRmseFailureSentinel));

    // Mixed records against an independent aggregation.
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> nc(0, 40);
    std::uniform_real_distribution<double> rm(0.5, 2.5);
    std::uniform_int_distribution<int> bk(0, 4);
    std::vector<EvalRecord> mixed;
    for (int i = 0; i < 200; ++i) {
        EvalRecord r;
        r.bucket = bk(rng);
        r.ncm = nc(rng);
        r.success = r.ncm > 10;
        r.rmse = r.success ? rm(rng) : kRmseFailureSentinel;
        mixed.push_back(r);
    }
    auto mrows = bucket_report(mixed);
    for (int b = 0; b < 5; ++b) {
        int total = 0, succ = 0;
        double sum_ncm = 0.0, sum_rmse = 0.0, sum_rmse_all = 0.0;
        for (const auto& r : mixed) {
            if (r.bucket != b) continue;
            ++total;
            sum_rmse_all += r.success ? r.rmse : kRmseFailureSentinel;
            if (r.success) {
                ++succ;
                sum_ncm += r.ncm;
                sum_rmse += r.rmse;
            }
        }
        CHECK(mrows[b].total == total);
        CHECK(mrows[b].successes == succ);
        CHECK(mrows[b].sr ==
              doctest::Approx(total ? 100.0 * succ / total : 0.0));
        if (succ) {
            CHECK(mrows[b].mean_ncm == doctest::Approx(sum_ncm / succ));
            CHECK(mrows[b].mean_rmse == doctest::Approx(sum_rmse / succ));
        }
        if (total)
            CHECK(mrows[b].mean_rmse_incl_fail ==
                  doctest::Approx(sum_rmse_all / total));
    }

    CHECK(bucket_report({}).empty());
}

TEST_CASE("synthetic textures and modality remap are deterministic") {
    ImageF t1 = make_texture(48, 48, 11);
    ImageF t2 = make_texture(48, 48, 11);
    CHECK(t1.px == t2.px);
    for (float v : t1.px) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    ImageF r1 = remap_modality(t1, 3);
    ImageF r2 = remap_modality(t1, 3);
    CHECK(r1.px == r2.px);
    // The remap is a different modality, not a copy.
    double diff = 0.0;
    for (std::size_t i = 0; i < r1.px.size(); ++i)
        diff += std::fabs(r1.px[i] - t1.px[i]);
    CHECK(diff / r1.px.size() > 0.01);
}
