#include "remm/kernels.hpp"

#include <atomic>

namespace remm::kernels {

namespace scalar {
void sgemm(int, int, int, const float*, int, const float*, int, float*, int,
           bool);
void sgemm_nt(int, int, int, const float*, int, const float*, int, float*, int,
              bool);
void sgemm_tn(int, int, int, const float*, int, const float*, int, float*, int,
              bool);
float dot(const float*, const float*, int);
void axpy(int, float, const float*, float*);
void l2_normalize_rows(float*, int, int, float);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void sgemm(int, int, int, const float*, int, const float*, int, float*, int,
           bool);
void sgemm_nt(int, int, int, const float*, int, const float*, int, float*, int,
              bool);
void sgemm_tn(int, int, int, const float*, int, const float*, int, float*, int,
              bool);
float dot(const float*, const float*, int);
void axpy(int, float, const float*, float*);
void l2_normalize_rows(float*, int, int, float);
}  // namespace avx2
#endif

namespace {

std::atomic<bool> g_force_scalar{false};

bool use_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    static const bool supported = __builtin_cpu_supports("avx2") &&
                                  __builtin_cpu_supports("fma");
    return supported && !g_force_scalar.load(std::memory_order_relaxed);
#else
    return false;
#endif
}

}  // namespace

void force_scalar(bool on) { g_force_scalar.store(on); }

const char* backend_name() { return use_avx2() ? "avx2" : "scalar"; }

void sgemm(int m, int n, int k, const float* a, int lda, const float* b,
           int ldb, float* c, int ldc, bool accumulate) {
#if defined(__x86_64__) || defined(_M_X64)
    if (use_avx2()) return avx2::sgemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
#endif
    scalar::sgemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void sgemm_nt(int m, int n, int k, const float* a, int lda, const float* b,
              int ldb, float* c, int ldc, bool accumulate) {
#if defined(__x86_64__) || defined(_M_X64)
    if (use_avx2())
        return avx2::sgemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
#endif
    scalar::sgemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void sgemm_tn(int m, int n, int k, const float* a, int lda, const float* b,
              int ldb, float* c, int ldc, bool accumulate) {
#if defined(__x86_64__) || defined(_M_X64)
    if (use_avx2())
        return avx2::sgemm_tn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
#endif
    scalar::sgemm_tn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

float dot(const float* a, const float* b, int n) {
#if defined(__x86_64__) || defined(_M_X64)
    if (use_avx2()) return avx2::dot(a, b, n);
#endif
    return scalar::dot(a, b, n);
}

void axpy(int n, float alpha, const float* x, float* y) {
#if defined(__x86_64__) || defined(_M_X64)
    if (use_avx2()) return avx2::axpy(n, alpha, x, y);
#endif
    scalar::axpy(n, alpha, x, y);
}

void l2_normalize_rows(float* data, int rows, int dim, float eps) {
#if defined(__x86_64__) || defined(_M_X64)
    if (use_avx2()) return avx2::l2_normalize_rows(data, rows, dim, eps);
#endif
    scalar::l2_normalize_rows(data, rows, dim, eps);
}

}  // namespace remm::kernels
