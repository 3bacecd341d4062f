#include "remm/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace remm::kernels::avx2 {

namespace {

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

constexpr int kKc = 256;  // K block: packed B panel stays cache resident
constexpr int kNc = 496;  // N block, multiple of 16

// 6x16 kernel over a packed A block (6 values per k step, interleaved) and a
// packed B tile (16 contiguous values per k step). Twelve accumulators keep
// enough independent FMA chains in flight to cover the FMA latency.
template <bool Acc>
inline void micro6x16(int kc, const float* ap, const float* bp, float* c,
                      int ldc) {
    __m256 acc[6][2];
    for (int r = 0; r < 6; ++r) {
        if constexpr (Acc) {
            acc[r][0] = _mm256_loadu_ps(c + r * ldc);
            acc[r][1] = _mm256_loadu_ps(c + r * ldc + 8);
        } else {
            acc[r][0] = _mm256_setzero_ps();
            acc[r][1] = _mm256_setzero_ps();
        }
    }
    for (int p = 0; p < kc; ++p) {
        const __m256 b0 = _mm256_loadu_ps(bp + p * 16);
        const __m256 b1 = _mm256_loadu_ps(bp + p * 16 + 8);
        for (int r = 0; r < 6; ++r) {
            const __m256 av = _mm256_broadcast_ss(ap + p * 6 + r);
            acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < 6; ++r) {
        _mm256_storeu_ps(c + r * ldc, acc[r][0]);
        _mm256_storeu_ps(c + r * ldc + 8, acc[r][1]);
    }
}

struct PackBuffers {
    std::vector<float> a, b;
};

// Goto-style packed GEMM. Operands are addressed as A(i,p) = a[i*arow +
// p*acol] and B(p,j) = b[p*brow + j*bcol], so one core serves the nn, tn and
// nt layouts. Ragged edges are zero-padded in the packs and staged through a
// local tile so the kernel never touches memory outside C.
inline void gemm_packed(int m, int n, int k, const float* a, int arow,
                        int acol, const float* b, int brow, int bcol, float* c,
                        int ldc, bool accumulate) {
    thread_local PackBuffers buf;
    const int m6 = (m + 5) / 6;
    buf.a.resize(static_cast<std::size_t>(m6) * 6 * kKc);
    buf.b.resize(static_cast<std::size_t>(kKc) * kNc);

    for (int pc = 0; pc < k; pc += kKc) {
        const int kc = std::min(kKc, k - pc);
        const bool acc = accumulate || pc > 0;
        for (int ib = 0; ib < m6; ++ib) {
            float* dst = buf.a.data() + static_cast<std::size_t>(ib) * 6 * kc;
            for (int p = 0; p < kc; ++p)
                for (int r = 0; r < 6; ++r) {
                    const int i = ib * 6 + r;
                    dst[p * 6 + r] =
                        i < m ? a[static_cast<std::size_t>(i) * arow +
                                  static_cast<std::size_t>(pc + p) * acol]
                              : 0.0f;
                }
        }
        for (int jc = 0; jc < n; jc += kNc) {
            const int nc = std::min(kNc, n - jc);
            const int ntiles = (nc + 15) / 16;
            for (int t = 0; t < ntiles; ++t) {
                float* dst =
                    buf.b.data() + static_cast<std::size_t>(t) * kc * 16;
                const int j0 = jc + t * 16;
                const int jw = std::min(16, n - j0);
                for (int p = 0; p < kc; ++p) {
                    const float* src =
                        b + static_cast<std::size_t>(pc + p) * brow +
                        static_cast<std::size_t>(j0) * bcol;
                    for (int jj = 0; jj < jw; ++jj)
                        dst[p * 16 + jj] =
                            src[static_cast<std::size_t>(jj) * bcol];
                    for (int jj = jw; jj < 16; ++jj) dst[p * 16 + jj] = 0.0f;
                }
            }
            for (int ib = 0; ib < m6; ++ib) {
                const float* ap =
                    buf.a.data() + static_cast<std::size_t>(ib) * 6 * kc;
                const int i0 = ib * 6;
                const int iw = std::min(6, m - i0);
                for (int t = 0; t < ntiles; ++t) {
                    const float* bp =
                        buf.b.data() + static_cast<std::size_t>(t) * kc * 16;
                    const int j0 = jc + t * 16;
                    const int jw = std::min(16, n - j0);
                    float* cblk = c + static_cast<std::size_t>(i0) * ldc + j0;
                    if (iw == 6 && jw == 16) {
                        if (acc)
                            micro6x16<true>(kc, ap, bp, cblk, ldc);
                        else
                            micro6x16<false>(kc, ap, bp, cblk, ldc);
                    } else {
                        alignas(32) float tmp[6 * 16] = {};
                        if (acc)
                            for (int r = 0; r < iw; ++r)
                                for (int jj = 0; jj < jw; ++jj)
                                    tmp[r * 16 + jj] =
                                        cblk[static_cast<std::size_t>(r) * ldc +
                                             jj];
                        if (acc)
                            micro6x16<true>(kc, ap, bp, tmp, 16);
                        else
                            micro6x16<false>(kc, ap, bp, tmp, 16);
                        for (int r = 0; r < iw; ++r)
                            for (int jj = 0; jj < jw; ++jj)
                                cblk[static_cast<std::size_t>(r) * ldc + jj] =
                                    tmp[r * 16 + jj];
                    }
                }
            }
        }
    }
}

}  // namespace

void sgemm(int m, int n, int k, const float* a, int lda, const float* b,
           int ldb, float* c, int ldc, bool accumulate) {
    gemm_packed(m, n, k, a, lda, 1, b, ldb, 1, c, ldc, accumulate);
}

void sgemm_tn(int m, int n, int k, const float* a, int lda, const float* b,
              int ldb, float* c, int ldc, bool accumulate) {
    // Logical row i of A^T is column i of A.
    gemm_packed(m, n, k, a, 1, lda, b, ldb, 1, c, ldc, accumulate);
}

float dot(const float* a, const float* b, int n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    int i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                               acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8),
                               _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                               acc0);
    float acc = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void sgemm_nt(int m, int n, int k, const float* a, int lda, const float* b,
              int ldb, float* c, int ldc, bool accumulate) {
    // Logical column j of B^T is row j of B.
    gemm_packed(m, n, k, a, lda, 1, b, 1, ldb, c, ldc, accumulate);
}

void axpy(int n, float alpha, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(alpha);
    int i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(
            y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i),
                                   _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void l2_normalize_rows(float* data, int rows, int dim, float eps) {
    for (int r = 0; r < rows; ++r) {
        float* row = data + static_cast<std::size_t>(r) * dim;
        const float norm = std::sqrt(dot(row, row, dim));
        if (norm < eps) continue;
        const __m256 inv = _mm256_set1_ps(1.0f / norm);
        int i = 0;
        for (; i + 8 <= dim; i += 8)
            _mm256_storeu_ps(row + i,
                             _mm256_mul_ps(_mm256_loadu_ps(row + i), inv));
        for (; i < dim; ++i) row[i] /= norm;
    }
}

}  // namespace remm::kernels::avx2

#endif  // x86_64
