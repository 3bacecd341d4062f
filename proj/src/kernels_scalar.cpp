#include "remm/kernels.hpp"

#include <cmath>

namespace remm::kernels::scalar {

void sgemm(int m, int n, int k, const float* a, int lda, const float* b,
           int ldb, float* c, int ldc, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<std::size_t>(i) * ldc;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = 0.0f;
        }
        for (int p = 0; p < k; ++p) {
            const float av = a[static_cast<std::size_t>(i) * lda + p];
            const float* brow = b + static_cast<std::size_t>(p) * ldb;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void sgemm_nt(int m, int n, int k, const float* a, int lda, const float* b,
              int ldb, float* c, int ldc, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::size_t>(i) * lda;
        float* crow = c + static_cast<std::size_t>(i) * ldc;
        for (int j = 0; j < n; ++j) {
            const float* brow = b + static_cast<std::size_t>(j) * ldb;
            float acc = 0.0f;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void sgemm_tn(int m, int n, int k, const float* a, int lda, const float* b,
              int ldb, float* c, int ldc, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<std::size_t>(i) * ldc;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = 0.0f;
        }
        for (int p = 0; p < k; ++p) {
            const float av = a[static_cast<std::size_t>(p) * lda + i];
            const float* brow = b + static_cast<std::size_t>(p) * ldb;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

float dot(const float* a, const float* b, int n) {
    float acc = 0.0f;
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(int n, float alpha, const float* x, float* y) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void l2_normalize_rows(float* data, int rows, int dim, float eps) {
    for (int r = 0; r < rows; ++r) {
        float* row = data + static_cast<std::size_t>(r) * dim;
        float sq = 0.0f;
        for (int i = 0; i < dim; ++i) sq += row[i] * row[i];
        const float norm = std::sqrt(sq);
        if (norm < eps) continue;
        const float inv = 1.0f / norm;
        for (int i = 0; i < dim; ++i) row[i] *= inv;
    }
}

}  // namespace remm::kernels::scalar
