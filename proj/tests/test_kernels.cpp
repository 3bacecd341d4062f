#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "remm/kernels.hpp"

using namespace remm::kernels;

namespace {

struct ScalarGuard {
    ScalarGuard() { force_scalar(true); }
    ~ScalarGuard() { force_scalar(false); }
};

std::vector<float> random_vec(std::size_t n, std::mt19937& rng) {
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// Run one of the three gemm layouts with both backends and compare.
void check_gemm(int which, int m, int n, int k, bool accumulate,
                std::mt19937& rng) {
    const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
    const auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
    std::vector<float> at(static_cast<std::size_t>(k) * m);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p)
            at[static_cast<std::size_t>(p) * m + i] =
                a[static_cast<std::size_t>(i) * k + p];
    std::vector<float> bt(static_cast<std::size_t>(n) * k);
    for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j)
            bt[static_cast<std::size_t>(j) * k + p] =
                b[static_cast<std::size_t>(p) * n + j];

    auto c_ref = random_vec(static_cast<std::size_t>(m) * n, rng);
    auto c_simd = c_ref;
    auto run = [&](std::vector<float>& c) {
        switch (which) {
            case 0:
                sgemm(m, n, k, a.data(), k, b.data(), n, c.data(), n,
                      accumulate);
                break;
            case 1:
                sgemm_nt(m, n, k, a.data(), k, bt.data(), k, c.data(), n,
                         accumulate);
                break;
            default:
                sgemm_tn(m, n, k, at.data(), m, b.data(), n, c.data(), n,
                         accumulate);
        }
    };
    {
        ScalarGuard g;
        run(c_ref);
    }
    run(c_simd);
    const float tol = 1e-4f * static_cast<float>(k);
    for (std::size_t i = 0; i < c_ref.size(); ++i)
        REQUIRE(std::fabs(c_ref[i] - c_simd[i]) <= tol);
}

}  // namespace

TEST_CASE("backend name is one of the two implementations") {
    const std::string name = backend_name();
    CHECK((name == "avx2" || name == "scalar"));
    {
        ScalarGuard g;
        CHECK(std::string(backend_name()) == "scalar");
    }
}

TEST_CASE("gemm variants match the scalar reference across shapes") {
    std::mt19937 rng(20240817);
    const int dims[][3] = {{1, 1, 1},   {1, 17, 3},   {3, 5, 7},
                           {4, 16, 8},  {5, 33, 9},   {16, 100, 37},
                           {64, 496, 256}, {7, 530, 300}, {130, 41, 513}};
    for (const auto& d : dims)
        for (int acc = 0; acc < 2; ++acc)
            for (int which = 0; which < 3; ++which)
                check_gemm(which, d[0], d[1], d[2], acc != 0, rng);
}

TEST_CASE("dot matches scalar reference") {
    std::mt19937 rng(7);
    for (int n : {1, 7, 8, 15, 16, 127, 128, 1000}) {
        const auto a = random_vec(static_cast<std::size_t>(n), rng);
        const auto b = random_vec(static_cast<std::size_t>(n), rng);
        float ref;
        {
            ScalarGuard g;
            ref = dot(a.data(), b.data(), n);
        }
        const float simd = dot(a.data(), b.data(), n);
        CHECK(std::fabs(ref - simd) <= 1e-4f * static_cast<float>(n));
    }
}

TEST_CASE("axpy matches scalar reference") {
    std::mt19937 rng(11);
    for (int n : {1, 9, 64, 257}) {
        const auto x = random_vec(static_cast<std::size_t>(n), rng);
        auto y_ref = random_vec(static_cast<std::size_t>(n), rng);
        auto y_simd = y_ref;
        {
            ScalarGuard g;
            axpy(n, 0.37f, x.data(), y_ref.data());
        }
        axpy(n, 0.37f, x.data(), y_simd.data());
        for (int i = 0; i < n; ++i)
            CHECK(std::fabs(y_ref[i] - y_simd[i]) <= 1e-5f);
    }
}

TEST_CASE("l2_normalize_rows matches scalar reference and unit norms") {
    std::mt19937 rng(13);
    const int rows = 9, dim = 37;
    auto m_ref = random_vec(static_cast<std::size_t>(rows) * dim, rng);
    auto m_simd = m_ref;
    {
        ScalarGuard g;
        l2_normalize_rows(m_ref.data(), rows, dim);
    }
    l2_normalize_rows(m_simd.data(), rows, dim);
    for (std::size_t i = 0; i < m_ref.size(); ++i)
        CHECK(std::fabs(m_ref[i] - m_simd[i]) <= 1e-5f);
    for (int r = 0; r < rows; ++r) {
        double n = 0;
        for (int c = 0; c < dim; ++c) {
            const double v = m_simd[static_cast<std::size_t>(r) * dim + c];
            n += v * v;
        }
        CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-4));
    }
    // Zero rows pass through untouched.
    std::vector<float> z(16, 0.0f);
    l2_normalize_rows(z.data(), 1, 16);
    for (float v : z) CHECK(v == 0.0f);
}
