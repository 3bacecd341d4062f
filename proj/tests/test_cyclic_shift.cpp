#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "remm/cyclic_shift.hpp"

using namespace remm;

namespace {

std::vector<float> random_unit(std::mt19937& rng, int dim = 128) {
    std::normal_distribution<float> d(0.0f, 1.0f);
    std::vector<float> v(dim);
    double n = 0.0;
    for (auto& x : v) {
        x = d(rng);
        n += (double)x * x;
    }
    const float inv = (float)(1.0 / std::sqrt(n));
    for (auto& x : v) x *= inv;
    return v;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (double)a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("group reshapes losslessly for every allowed size") {
    std::mt19937 rng(1);
    const auto d = random_unit(rng);
    for (int g : {8, 16, 32, 64}) {
        GroupedDescriptor gd = group(d, g);
        CHECK(gd.g_size == g);
        CHECK(gd.group_len() == 128 / g);
        CHECK(flatten(gd) == d);
    }
    CHECK(group(d, 16).group_len() == 8);  // 16 groups of 8 channels
    CHECK(group(d, 64).group_len() == 2);
    CHECK_THROWS_AS(group(d, 7), std::invalid_argument);
    CHECK_THROWS_AS(group(d, 0), std::invalid_argument);
}

TEST_CASE("shift_value_from_angle arithmetic") {
    CHECK(shift_value_from_angle(0.0, 16) == 0);
    CHECK(shift_value_from_angle(90.0, 16) == 4);
    CHECK(shift_value_from_angle(50.0, 16) == 2);  // round(2.222) = 2
    CHECK(shift_value_from_angle(360.0, 16) == 0);
    CHECK(shift_value_from_angle(-90.0, 16) == 12);
    // G = 16: every 10-degree step matches round(theta/22.5) mod 16.
    for (int theta = 0; theta < 360; theta += 10)
        CHECK(shift_value_from_angle(theta, 16) ==
              (int)std::lround(theta / 22.5) % 16);
    CHECK_THROWS_AS(shift_value_from_angle(std::nan(""), 16),
                    std::invalid_argument);
}

TEST_CASE("cyclic shift algebra over 1000 random descriptors, all sizes") {
    std::mt19937 rng(2);
    std::uniform_int_distribution<int> pick(0, 3);
    const int sizes[] = {8, 16, 32, 64};
    for (int trial = 0; trial < 1000; ++trial) {
        const int g = sizes[pick(rng)];
        GroupedDescriptor gd = group(random_unit(rng), g);
        std::uniform_int_distribution<int> sh(0, g - 1);
        const int a = sh(rng), b = sh(rng);

        // Composition is addition mod g, bit-exact.
        CHECK(cyclic_shift(cyclic_shift(gd, a), b).values ==
              cyclic_shift(gd, (a + b) % g).values);
        // Inverse.
        CHECK(cyclic_shift(cyclic_shift(gd, a), g - a).values == gd.values);
        // Identity.
        CHECK(cyclic_shift(gd, 0).values == gd.values);
        // Negative and out-of-range shifts reduce mod g.
        CHECK(cyclic_shift(gd, a - g).values == cyclic_shift(gd, a).values);
        CHECK(cyclic_shift(gd, a + g).values == cyclic_shift(gd, a).values);
        // Norm preserved bit-exact up to reordering.
        auto sorted_a = gd.values;
        auto sorted_b = cyclic_shift(gd, a).values;
        std::sort(sorted_a.begin(), sorted_a.end());
        std::sort(sorted_b.begin(), sorted_b.end());
        CHECK(sorted_a == sorted_b);
    }
}

TEST_CASE("cyclic shift rotates group blocks like a list rotation") {
    GroupedDescriptor gd;
    gd.g_size = 16;
    gd.dim = 128;
    gd.values.resize(128);
    for (int i = 0; i < 16; ++i)
        for (int c = 0; c < 8; ++c) gd.values[i * 8 + c] = (float)i;

    GroupedDescriptor s = cyclic_shift(gd, 3);
    std::vector<float> ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
    std::rotate(ids.begin(), ids.begin() + 3, ids.end());
    for (int i = 0; i < 16; ++i)
        for (int c = 0; c < 8; ++c) CHECK(s.values[i * 8 + c] == ids[i]);
}

TEST_CASE("encoding consistency: shift undoes an orientation-bin rotation") {
    // A descriptor whose groups encode orientation bins: rotating the image
    // by k*(360/g) rotates the group axis; the angle-derived shift undoes it.
    std::mt19937 rng(3);
    for (int g : {8, 16, 32, 64}) {
        GroupedDescriptor base = group(random_unit(rng), g);
        for (int k = 0; k < g; ++k) {
            const double theta = k * (360.0 / g);
            // Rotating by theta moves bin content toward higher indices by k:
            // rotated group (i + k) mod g holds base group i.
            GroupedDescriptor rotated = cyclic_shift(base, g - k);
            const int s = shift_value_from_angle(theta, g);
            CHECK(s == k);
            CHECK(cyclic_shift(rotated, s).values == base.values);
        }
    }
}

TEST_CASE("topk shift values") {
    GroupedDescriptor gd;
    gd.g_size = 16;
    gd.dim = 128;
    gd.values.assign(128, 0.0f);

    // One-hot histogram: single shift at the hot index in both modes.
    gd.values[5 * 8] = 1.0f;
    CHECK(topk_shift_values(gd, TopKMode::kTop1).shifts ==
          std::vector<int>{5});
    CHECK(topk_shift_values(gd, TopKMode::kRatio, 0.1).shifts ==
          std::vector<int>{5});

    // h = [1.0, 0.85, 0.3, 0...]: R=0.8 keeps {0,1}; R=0.9 keeps {0}.
    gd.values.assign(128, 0.0f);
    gd.values[0 * 8] = 1.0f;
    gd.values[1 * 8] = 0.85f;
    gd.values[2 * 8] = 0.3f;
    CHECK(topk_shift_values(gd, TopKMode::kRatio, 0.8).shifts ==
          std::vector<int>({0, 1}));
    CHECK(topk_shift_values(gd, TopKMode::kRatio, 0.9).shifts ==
          std::vector<int>{0});
    CHECK(topk_shift_values(gd, TopKMode::kTop1).shifts.size() == 1);

    // All-equal histogram: every shift, in index order.
    gd.values.assign(128, 0.25f);
    auto all = topk_shift_values(gd, TopKMode::kRatio, 0.5).shifts;
    std::vector<int> expect(16);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
}

TEST_CASE("topk ratio sets are nested and argmax-first") {
    std::mt19937 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        GroupedDescriptor gd = group(random_unit(rng), 16);
        ShiftSet prev;
        for (double r : {0.9, 0.7, 0.5, 0.3, 0.1}) {
            ShiftSet s = topk_shift_values(gd, TopKMode::kRatio, r);
            REQUIRE(!s.shifts.empty());
            // First element is the argmax shift.
            CHECK(s.shifts.front() ==
                  topk_shift_values(gd, TopKMode::kTop1).shifts.front());
            // Lower ratio admits a superset.
            for (int v : prev.shifts)
                CHECK(std::find(s.shifts.begin(), s.shifts.end(), v) !=
                      s.shifts.end());
            // No duplicates.
            auto sorted = s.shifts;
            std::sort(sorted.begin(), sorted.end());
            CHECK(std::adjacent_find(sorted.begin(), sorted.end()) ==
                  sorted.end());
            prev = s;
        }
    }
}

TEST_CASE("expand_descriptors emits one unit descriptor per shift") {
    std::mt19937 rng(5);
    GroupedDescriptor gd = group(random_unit(rng), 16);
    ShiftSet shifts{{0, 3, 7}};
    auto out = expand_descriptors(gd, shifts);
    REQUIRE(out.size() == 3);
    // Shift 0 reproduces the input.
    for (int i = 0; i < 128; ++i)
        CHECK(out[0][i] == doctest::Approx(gd.values[i]).epsilon(1e-5));
    for (const auto& d : out) {
        double n = 0.0;
        for (float v : d) n += (double)v * v;
        CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
        // Same multiset of values: a shift is a permutation.
        auto a = d, b = gd.values;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        for (int i = 0; i < 128; ++i)
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-5));
    }
}

TEST_CASE("matching invariance: best shift pair differs by the true shift") {
    std::mt19937 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        GroupedDescriptor gd = group(random_unit(rng), 16);
        std::uniform_int_distribution<int> sh(0, 15);
        const int s = sh(rng);
        GroupedDescriptor shifted = cyclic_shift(gd, s);

        ShiftSet all;
        all.shifts.resize(16);
        std::iota(all.shifts.begin(), all.shifts.end(), 0);
        auto va = expand_descriptors(gd, all);
        auto vb = expand_descriptors(shifted, all);
        double best = -2.0;
        int best_a = -1, best_b = -1;
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j < 16; ++j) {
                const double c = cosine(va[i], vb[j]);
                if (c > best) {
                    best = c;
                    best_a = i;
                    best_b = j;
                }
            }
        CHECK(best == doctest::Approx(1.0).epsilon(1e-4));
        CHECK((best_b - best_a + 32) % 16 == (16 - s) % 16);
    }
}

TEST_CASE("shift_permutation matches cyclic_shift on the flat descriptor") {
    std::mt19937 rng(7);
    for (int g : {8, 16, 32, 64}) {
        const auto d = random_unit(rng);
        std::uniform_int_distribution<int> sh(0, g - 1);
        const int s = sh(rng);
        const auto perm = shift_permutation(s, g);
        const auto expect = flatten(cyclic_shift(group(d, g), s));
        for (int i = 0; i < 128; ++i) CHECK(d[perm[i]] == expect[i]);
    }
}
