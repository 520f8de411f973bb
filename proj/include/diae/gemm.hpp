#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>

#include "diae/parallel.hpp"

#ifdef DIAE_USE_OPENBLAS
#include <cblas.h>
#endif

namespace diae::kern {

// Row-major GEMM, C = alpha*op(A)*op(B) + beta*C.
//
// Threading model: BLAS is pinned to one thread (see parallel.hpp) and all
// parallelism lives in OpenMP loops over samples/tiles, which profiles much
// faster at these small conv-sized problems than multithreaded GEMM calls.
// gemm() parallelizes internally; gemm_st() stays on the calling thread so it
// can be used inside a parallel-over-samples loop. Per output element the
// k-summation order is fixed, so results do not depend on the thread count.

enum class Trans { N, T };

namespace detail {

constexpr int kNB = 240; // column block, keeps a K x NB panel of B in cache

template <class T>
void gemm_nn_own(int M, int N, int K, T alpha, const T* A, int lda,
                 const T* B, int ldb, T beta, T* C, int ldc, bool par) {
    const int jblocks = (N + kNB - 1) / kNB;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int jb = 0; jb < jblocks; ++jb) {
        for (int i = 0; i < M; ++i) {
            const int j0 = jb * kNB;
            const int jn = std::min(kNB, N - j0);
            T acc[kNB];
            for (int j = 0; j < jn; ++j) acc[j] = T(0);
            const T* arow = A + size_t(i) * lda;
            for (int k = 0; k < K; ++k) {
                const T a = arow[k];
                const T* brow = B + size_t(k) * ldb + j0;
#pragma omp simd
                for (int j = 0; j < jn; ++j) acc[j] += a * brow[j];
            }
            T* crow = C + size_t(i) * ldc + j0;
            if (beta == T(0)) {
                for (int j = 0; j < jn; ++j) crow[j] = alpha * acc[j];
            } else {
                for (int j = 0; j < jn; ++j) crow[j] = alpha * acc[j] + beta * crow[j];
            }
        }
    }
}

// C[M,N] = A^T * B where A is K x M
template <class T>
void gemm_tn_own(int M, int N, int K, T alpha, const T* A, int lda,
                 const T* B, int ldb, T beta, T* C, int ldc, bool par) {
    const int jblocks = (N + kNB - 1) / kNB;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int jb = 0; jb < jblocks; ++jb) {
        for (int i = 0; i < M; ++i) {
            const int j0 = jb * kNB;
            const int jn = std::min(kNB, N - j0);
            T acc[kNB];
            for (int j = 0; j < jn; ++j) acc[j] = T(0);
            for (int k = 0; k < K; ++k) {
                const T a = A[size_t(k) * lda + i];
                const T* brow = B + size_t(k) * ldb + j0;
#pragma omp simd
                for (int j = 0; j < jn; ++j) acc[j] += a * brow[j];
            }
            T* crow = C + size_t(i) * ldc + j0;
            if (beta == T(0)) {
                for (int j = 0; j < jn; ++j) crow[j] = alpha * acc[j];
            } else {
                for (int j = 0; j < jn; ++j) crow[j] = alpha * acc[j] + beta * crow[j];
            }
        }
    }
}

// C[M,N] = A * B^T where B is N x K; contiguous dot products per element
template <class T>
void gemm_nt_own(int M, int N, int K, T alpha, const T* A, int lda,
                 const T* B, int ldb, T beta, T* C, int ldc, bool par) {
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            const T* arow = A + size_t(i) * lda;
            const T* brow = B + size_t(j) * ldb;
            T acc = T(0);
#pragma omp simd reduction(+ : acc)
            for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
            T& c = C[size_t(i) * ldc + j];
            c = (beta == T(0)) ? alpha * acc : alpha * acc + beta * c;
        }
    }
}

} // namespace detail

template <class T>
void gemm_own(Trans ta, Trans tb, int M, int N, int K, T alpha, const T* A,
              int lda, const T* B, int ldb, T beta, T* C, int ldc,
              bool par = true) {
    if (ta == Trans::N && tb == Trans::N)
        detail::gemm_nn_own(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc, par);
    else if (ta == Trans::T && tb == Trans::N)
        detail::gemm_tn_own(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc, par);
    else if (ta == Trans::N && tb == Trans::T)
        detail::gemm_nt_own(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc, par);
    else
        throw std::runtime_error("gemm: T/T not implemented");
}

#ifdef DIAE_USE_OPENBLAS

inline void gemm_st(Trans ta, Trans tb, int M, int N, int K, float alpha,
                    const float* A, int lda, const float* B, int ldb,
                    float beta, float* C, int ldc) {
    init_threading();
    cblas_sgemm(CblasRowMajor, ta == Trans::N ? CblasNoTrans : CblasTrans,
                tb == Trans::N ? CblasNoTrans : CblasTrans, M, N, K, alpha, A,
                lda, B, ldb, beta, C, ldc);
}

inline void gemm_st(Trans ta, Trans tb, int M, int N, int K, double alpha,
                    const double* A, int lda, const double* B, int ldb,
                    double beta, double* C, int ldc) {
    init_threading();
    cblas_dgemm(CblasRowMajor, ta == Trans::N ? CblasNoTrans : CblasTrans,
                tb == Trans::N ? CblasNoTrans : CblasTrans, M, N, K, alpha, A,
                lda, B, ldb, beta, C, ldc);
}

#else

template <class T>
void gemm_st(Trans ta, Trans tb, int M, int N, int K, T alpha, const T* A,
             int lda, const T* B, int ldb, T beta, T* C, int ldc) {
    gemm_own(ta, tb, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc, false);
}

#endif

template <class T>
void gemm(Trans ta, Trans tb, int M, int N, int K, T alpha, const T* A,
          int lda, const T* B, int ldb, T beta, T* C, int ldc) {
#ifdef DIAE_USE_OPENBLAS
    gemm_st(ta, tb, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
#else
    gemm_own(ta, tb, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc, true);
#endif
}

} // namespace diae::kern
