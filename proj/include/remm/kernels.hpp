#pragma once

#include <cstddef>

// Data-parallel inner loops used by the tensor ops and the matcher.
// Each kernel has a scalar reference implementation and, on x86-64,
// an AVX2+FMA variant selected once at startup. remm_use_scalar_kernels()
// forces the reference path (used by the equivalence tests).

namespace remm::kernels {

// C[M x N] = A[M x K] * B[K x N], all row-major. If accumulate, C += A*B.
void sgemm(int m, int n, int k, const float* a, int lda, const float* b,
           int ldb, float* c, int ldc, bool accumulate = false);

// C[M x N] = A[M x K] * B[N x K]^T  (row dot row), row-major.
void sgemm_nt(int m, int n, int k, const float* a, int lda, const float* b,
              int ldb, float* c, int ldc, bool accumulate = false);

// C[M x N] = A[K x M]^T * B[K x N], row-major.
void sgemm_tn(int m, int n, int k, const float* a, int lda, const float* b,
              int ldb, float* c, int ldc, bool accumulate = false);

float dot(const float* a, const float* b, int n);

// y += alpha * x
void axpy(int n, float alpha, const float* x, float* y);

// Normalize each row of a [rows x dim] matrix to unit L2 norm.
// Rows with norm below eps are left untouched.
void l2_normalize_rows(float* data, int rows, int dim, float eps = 1e-12f);

// Which backend is active. "avx2" or "scalar".
const char* backend_name();

// Force the scalar reference kernels (process-wide). For tests.
void force_scalar(bool on);

}  // namespace remm::kernels
