#include "xaln/blas.hpp"

#include <cblas.h>
#include <cstdlib>
#include <malloc.h>
#include <mutex>

namespace xaln {

namespace {

// OpenBLAS's runtime CPU detection can fall back to its generic kernels under
// hypervisors that mask the CPU model string, costing ~3x on GEMM. If the
// host supports AVX2+FMA and no core type was requested, pin the Haswell
// kernels before the library initializes (it reads the env var on first call).
void pin_core_type_once() {
#if defined(__x86_64__) || defined(__i386__)
    if (std::getenv("OPENBLAS_CORETYPE") == nullptr &&
        __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
    }
#endif
#if defined(__GLIBC__)
    // Activation and gradient buffers are allocated and freed every training
    // step; keep them on the heap free list instead of round-tripping through
    // mmap/munmap, which re-faults hundreds of MB per step.
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

std::once_flag g_init_flag;

void init() { std::call_once(g_init_flag, pin_core_type_once); }

__attribute__((constructor)) void runtime_init() { init(); }

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
    init();
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
                ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
    init();
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
                ldb, beta, c, ldc);
}

}  // namespace xaln
