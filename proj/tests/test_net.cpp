#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include "remm/benchmark.hpp"
#include "remm/kernels.hpp"
#include "remm/net.hpp"
#include "remm/train.hpp"

using namespace remm;

namespace {

// Smallest config that still exercises the unshared/shared split; the
// descriptor dim stays divisible by 64 as the divisibility rule requires.
NetConfig tiny_config() {
    NetConfig c;
    c.unshared_channels = {2};
    c.shared_channels = {3, 64};
    c.detector_window = 3;
    c.positives_per_step = 6;
    return c;
}

Tensor random_image(int h, int w, std::mt19937& rng) {
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(h) * w);
    for (auto& x : v) x = d(rng);
    return Tensor::from_data({h, w}, std::move(v));
}

}  // namespace

TEST_CASE("config validation") {
    NetConfig c;
    c.validate();
    c.shared_channels = {64, 96};  // 96 not divisible by 64
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = NetConfig{};
    c.detector_window = 4;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = NetConfig{};
    c.tau = 0.0f;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("extract_features determinism, norms, and score range") {
    std::mt19937 rng(1);
    RemmNet net(tiny_config(), 7u);
    Tensor img = random_image(32, 32, rng);

    DenseFeatures f1 = net.extract_features(img, Modality::A);
    DenseFeatures f2 = net.extract_features(img, Modality::A);
    for (std::int64_t i = 0; i < f1.desc.size(); ++i)
        CHECK(f1.desc.data()[i] == f2.desc.data()[i]);
    for (std::int64_t i = 0; i < f1.scores.size(); ++i)
        CHECK(f1.scores.data()[i] == f2.scores.data()[i]);

    // Per-pixel unit descriptors; scores in (0,1).
    const int hw = 32 * 32, c = 64;
    for (int p = 0; p < hw; ++p) {
        double n = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            const double v = f1.desc.data()[ch * hw + p];
            n += v * v;
        }
        CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-4));
    }
    for (int p = 0; p < hw; ++p) {
        CHECK(f1.scores.data()[p] > 0.0f);
        CHECK(f1.scores.data()[p] < 1.0f);
    }

    CHECK_THROWS_AS(net.extract_features(random_image(16, 16, rng),
                                         Modality::A),
                    std::invalid_argument);
}

TEST_CASE("constant image gives spatially uniform detector scores") {
    RemmNet net(tiny_config(), 3u);
    Tensor img = Tensor::zeros({32, 32});
    DenseFeatures f = net.extract_features(img, Modality::A);
    const float first = f.scores.data()[0];
    for (std::int64_t i = 0; i < f.scores.size(); ++i)
        CHECK(f.scores.data()[i] == doctest::Approx(first).epsilon(1e-5));
}

TEST_CASE("detector scores sum to at most 1 per window cell") {
    std::mt19937 rng(2);
    RemmNet net(tiny_config(), 5u);
    Tensor img = random_image(33, 33, rng);  // ragged cells included
    DenseFeatures f = net.extract_features(img, Modality::A);
    const int w = tiny_config().detector_window;
    const int h = 33, ww = 33;
    for (int cy = 0; cy < h; cy += w)
        for (int cx = 0; cx < ww; cx += w) {
            double s = 0.0;
            for (int y = cy; y < std::min(cy + w, h); ++y)
                for (int x = cx; x < std::min(cx + w, ww); ++x)
                    s += f.scores.data()[y * ww + x];
            CHECK(s <= 1.0 + 1e-5);
        }
}

TEST_CASE("shared trunk uses the same parameter objects for both modalities") {
    RemmNet net(tiny_config(), 9u);
    int shared_count = 0;
    for (const auto& p : net.params())
        if (p.name.rfind("shared.", 0) == 0 ||
            p.name.rfind("detector.", 0) == 0)
            ++shared_count;
    CHECK(shared_count > 0);

    // Perturb a shared weight: both modality outputs must change.
    std::mt19937 rng(3);
    Tensor img = random_image(32, 32, rng);
    DenseFeatures a0 = net.extract_features(img, Modality::A);
    DenseFeatures b0 = net.extract_features(img, Modality::B);
    for (auto& p : net.params())
        if (p.name == "shared.0.w") p.t.data()[0] += 0.5f;
    DenseFeatures a1 = net.extract_features(img, Modality::A);
    DenseFeatures b1 = net.extract_features(img, Modality::B);
    double da = 0.0, db = 0.0;
    for (std::int64_t i = 0; i < a0.desc.size(); ++i) {
        da += std::fabs(a1.desc.data()[i] - a0.desc.data()[i]);
        db += std::fabs(b1.desc.data()[i] - b0.desc.data()[i]);
    }
    CHECK(da > 0.0);
    CHECK(db > 0.0);
}

TEST_CASE("align_to_reference identity and mask definition") {
    std::mt19937 rng(4);
    RemmNet net(tiny_config(), 11u);
    Tensor img = random_image(32, 32, rng);
    DenseFeatures f = net.extract_features(img, Modality::B);

    AlignedFeatures id = align_to_reference(f, Homography::identity());
    for (std::int64_t i = 0; i < f.desc.size(); ++i)
        CHECK(id.features.desc.data()[i] ==
              doctest::Approx(f.desc.data()[i]).epsilon(1e-5));
    for (std::int64_t i = 0; i < id.mask.size(); ++i)
        CHECK(id.mask.data()[i] == 1.0f);

    // A +8 px shift leaves a stripe of the grid outside [-1,1]: mask 0 there.
    Homography tr = make_homography(0.0, 1.0, {8.0, 0.0}, {0.0, 0.0});
    AlignedFeatures sh = align_to_reference(f, tr);
    auto grid = affine_grid(tr, 32, 32, 32, 32);
    for (int i = 0; i < 32 * 32; ++i) {
        const float gx = grid[i * 2], gy = grid[i * 2 + 1];
        const bool inside = gx >= -1.0f && gx <= 1.0f && gy >= -1.0f &&
                            gy <= 1.0f;
        CHECK(sh.mask.data()[i] == (inside ? 1.0f : 0.0f));
    }
}

TEST_CASE("shift_descriptor_loss pinned values") {
    // n = 2 orthogonal matched pairs at tau = 0.1:
    // per term -log(e^10 / (e^10 + e^0)) ~= 4.54e-5.
    const int d = 64;
    std::vector<float> a(d, 0.0f), b(d, 0.0f);
    a[0] = 1.0f;
    b[1] = 1.0f;
    std::vector<float> rows;
    rows.insert(rows.end(), a.begin(), a.end());
    rows.insert(rows.end(), b.begin(), b.end());
    Tensor rd_x = Tensor::from_data({2, d}, rows);
    Tensor rd_y = Tensor::from_data({2, d}, rows);
    const double expect = -std::log(std::exp(10.0) / (std::exp(10.0) + 1.0));
    CHECK(shift_descriptor_loss(rd_x, rd_y, 0.1f).item() ==
          doctest::Approx(expect).epsilon(1e-2));

    // All descriptors identical: uniform softmax, loss = log n.
    for (int n : {2, 4, 8}) {
        std::vector<float> same;
        for (int i = 0; i < n; ++i) {
            same.insert(same.end(), a.begin(), a.end());
        }
        Tensor t = Tensor::from_data({n, d}, same);
        CHECK(shift_descriptor_loss(t, t, 0.1f).item() ==
              doctest::Approx(std::log((double)n)).epsilon(1e-4));
    }

    CHECK_THROWS_AS(
        shift_descriptor_loss(Tensor::from_data({1, d}, a),
                              Tensor::from_data({1, d}, a), 0.1f),
        std::invalid_argument);
}

TEST_CASE("shift_descriptor_loss is permutation-equivariant") {
    std::mt19937 rng(5);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    const int n = 6, d = 64;
    std::vector<float> x(n * d), y(n * d);
    for (auto& v : x) v = nd(rng);
    for (auto& v : y) v = nd(rng);
    kernels::l2_normalize_rows(x.data(), n, d);
    kernels::l2_normalize_rows(y.data(), n, d);

    const float base = shift_descriptor_loss(Tensor::from_data({n, d}, x),
                                             Tensor::from_data({n, d}, y),
                                             0.1f)
                           .item();
    const int perm[] = {3, 1, 5, 0, 4, 2};
    std::vector<float> xp(n * d), yp(n * d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            xp[i * d + j] = x[perm[i] * d + j];
            yp[i * d + j] = y[perm[i] * d + j];
        }
    const float permuted = shift_descriptor_loss(
        Tensor::from_data({n, d}, xp), Tensor::from_data({n, d}, yp), 0.1f)
                               .item();
    CHECK(std::fabs(base - permuted) < 1e-6);
}

TEST_CASE("peaking_loss extremes") {
    Tensor mask = Tensor::full({9, 9}, 1.0f);
    Tensor flat = Tensor::full({9, 9}, 0.4f);
    CHECK(peaking_loss(flat, mask, 3).item() ==
          doctest::Approx(1.0).epsilon(1e-6));

    // One-hot cells score strictly below flat ones.
    std::vector<float> v(81, 0.0f);
    for (int cy = 0; cy < 3; ++cy)
        for (int cx = 0; cx < 3; ++cx) v[(cy * 3 + 1) * 9 + cx * 3 + 1] = 1.0f;
    Tensor peaky = Tensor::from_data({9, 9}, v);
    CHECK(peaking_loss(peaky, mask, 3).item() < 1.0f);
}

TEST_CASE("repeatability_loss pinned values and oracle") {
    Tensor mask = Tensor::full({4, 4}, 1.0f);
    Tensor a = Tensor::full({4, 4}, 0.7f);
    CHECK(repeatability_loss(a, a, mask).item() ==
          doctest::Approx(0.0).epsilon(1e-7));
    CHECK(repeatability_loss(Tensor::full({4, 4}, 1.0f),
                             Tensor::zeros({4, 4}), mask)
              .item() == doctest::Approx(1.0).epsilon(1e-6));

    std::mt19937 rng(6);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    std::vector<float> sx(16), sy(16), mk(16);
    for (auto& v : sx) v = d(rng);
    for (auto& v : sy) v = d(rng);
    for (auto& v : mk) v = d(rng) < 0.5f ? 0.0f : 1.0f;
    mk[3] = 1.0f;  // keep the mask non-degenerate
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 16; ++i) {
        num += mk[i] * (sx[i] - sy[i]) * (sx[i] - sy[i]);
        den += mk[i];
    }
    CHECK(repeatability_loss(Tensor::from_data({4, 4}, sx),
                             Tensor::from_data({4, 4}, sy),
                             Tensor::from_data({4, 4}, mk))
              .item() == doctest::Approx(num / den).epsilon(1e-5));

    CHECK_THROWS_AS(repeatability_loss(a, a, Tensor::zeros({4, 4})),
                    std::invalid_argument);
}

TEST_CASE("total_loss weighting") {
    Tensor lp = Tensor::scalar(0.2f), lr = Tensor::scalar(0.3f),
           lsd = Tensor::scalar(0.5f);
    CHECK(total_loss(lp, lr, lsd, 1.0f, 1.0f, 1.0f).item() ==
          doctest::Approx(1.0).epsilon(1e-6));
    CHECK(total_loss(lp, lr, lsd, 0.0f, 2.0f, 1.0f).item() ==
          doctest::Approx(1.1).epsilon(1e-6));
}

TEST_CASE("loss gradients pass finite-difference checks on the full net") {
    // Full composite objective on a 32x32 pair: every parameter of the tiny
    // net against central differences.
    std::mt19937 rng(7);
    NetConfig cfg = tiny_config();
    RemmNet net(cfg, 21u);

    ImageF img_a;
    img_a.w = img_a.h = 32;
    img_a.px.resize(32 * 32);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (auto& v : img_a.px) v = d(rng);
    SynthesizedPair sp = synthesize_pair(img_a, remap_modality(img_a, 5),
                                         25.0, {0.9, 1.0}, 0.03, 77, true);

    auto forward = [&] {
        return pair_loss(net, sp.x, sp.y, sp.gt, 16).loss;
    };
    Tensor loss = forward();
    net.zero_grads();
    backward(loss);

    // float32 forwards make per-element differences noisy for tiny
    // gradients, so the probe set is compared in aggregate.
    const double h = 1e-2;
    double err2 = 0.0, ref2 = 0.0;
    int checked = 0;
    for (auto& p : net.params()) {
        REQUIRE(p.t.grad() != nullptr);
        std::vector<float> analytic(p.t.grad(), p.t.grad() + p.t.size());
        // Spot-check a deterministic subset of each parameter tensor.
        for (std::int64_t i = 0; i < p.t.size();
             i += std::max<std::int64_t>(1, p.t.size() / 4)) {
            const float keep = p.t.data()[i];
            p.t.data()[i] = keep + (float)h;
            const double up = forward().item();
            p.t.data()[i] = keep - (float)h;
            const double dn = forward().item();
            p.t.data()[i] = keep;
            const double numeric = (up - dn) / (2.0 * h);
            err2 += (numeric - analytic[i]) * (numeric - analytic[i]);
            ref2 += numeric * numeric;
            if (std::fabs(numeric) > 1e-3) ++checked;
        }
    }
    CHECK(checked > 10);  // the probe hit real gradient signal
    CHECK(std::sqrt(err2) / std::sqrt(ref2) < 1e-1);
}

TEST_CASE("checkpoint round trip reproduces forward outputs") {
    std::mt19937 rng(8);
    RemmNet net(tiny_config(), 31u);
    Tensor img = random_image(32, 32, rng);
    DenseFeatures before = net.extract_features(img, Modality::B);

    const std::string path =
        (std::filesystem::temp_directory_path() / "remm_ckpt_test.remm")
            .string();
    save_checkpoint(path, net.params());
    RemmNet loaded(tiny_config(), load_checkpoint(path));
    DenseFeatures after = loaded.extract_features(img, Modality::B);
    for (std::int64_t i = 0; i < before.desc.size(); ++i)
        CHECK(before.desc.data()[i] == after.desc.data()[i]);
    std::remove(path.c_str());
}

TEST_CASE("adam step through shared params moves both modality paths") {
    std::mt19937 rng(9);
    RemmNet net(tiny_config(), 41u);
    ImageF img;
    img.w = img.h = 32;
    img.px.resize(32 * 32);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (auto& v : img.px) v = d(rng);
    SynthesizedPair sp =
        synthesize_pair(img, remap_modality(img, 3), 40.0, {1.0, 1.0}, 0.0,
                        13, true);

    Tensor probe = random_image(32, 32, rng);
    DenseFeatures a0 = net.extract_features(probe, Modality::A);
    DenseFeatures b0 = net.extract_features(probe, Modality::B);

    net.zero_grads();
    backward(pair_loss(net, sp.x, sp.y, sp.gt, 16).loss);
    AdamState st = AdamState::init(net.params());
    adam_step(net.params(), st, 1e-2f);

    DenseFeatures a1 = net.extract_features(probe, Modality::A);
    DenseFeatures b1 = net.extract_features(probe, Modality::B);
    double da = 0.0, db = 0.0;
    for (std::int64_t i = 0; i < a0.desc.size(); ++i) {
        da += std::fabs(a1.desc.data()[i] - a0.desc.data()[i]);
        db += std::fabs(b1.desc.data()[i] - b0.desc.data()[i]);
    }
    CHECK(da > 0.0);
    CHECK(db > 0.0);
}

TEST_CASE("short training runs are seed-reproducible and reduce the loss") {
    std::vector<std::pair<ImageF, ImageF>> dataset;
    for (int i = 0; i < 2; ++i) {
        ImageF a = make_texture(32, 32, 100 + i);
        dataset.emplace_back(a, remap_modality(a, 200 + i));
    }
    TrainConfig tc;
    tc.net = tiny_config();
    tc.steps = 8;
    tc.batch_size = 2;
    tc.lr = 1e-3f;
    tc.seed = 5;

    const std::string ck1 =
        (std::filesystem::temp_directory_path() / "remm_train1.remm").string();
    const std::string ck2 =
        (std::filesystem::temp_directory_path() / "remm_train2.remm").string();
    RemmNet n1(tc.net, 5u), n2(tc.net, 5u);
    auto h1 = train(dataset, n1, tc, ck1);
    auto h2 = train(dataset, n2, tc, ck2);
    REQUIRE(h1.size() == 8);
    for (std::size_t i = 0; i < h1.size(); ++i)
        CHECK(h1[i].l_all == h2[i].l_all);  // bit-reproducible

    // lr decays linearly to zero at the final step.
    CHECK(h1.front().lr == doctest::Approx(1e-3).epsilon(1e-4));
    CHECK(h1.back().lr == doctest::Approx(0.0).epsilon(1e-6));

    auto p1 = load_checkpoint(ck1);
    auto p2 = load_checkpoint(ck2);
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i)
        for (std::int64_t j = 0; j < p1[i].t.size(); ++j)
            CHECK(p1[i].t.data()[j] == p2[i].t.data()[j]);
    std::remove(ck1.c_str());
    std::remove(ck2.c_str());
}
