#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#if defined(__AVX512F__) && defined(DIAE_USE_LIBMVEC)
#include <immintrin.h>
#endif

#include "diae/gemm.hpp"
#include "diae/parallel.hpp"
#include "diae/tensor.hpp"

// Dense NN kernels. Each kernel has a plain serial reference implementation
// (namespace serial) and an OpenMP-parallel one (namespace par); the
// dispatchers at the bottom pick per ExecConfig. Parallel kernels assign each
// output element to exactly one thread and keep per-element summation order
// fixed, so serial and parallel results agree bit-for-bit except where a
// kernel is documented to reassociate (GEMM-backed convolutions).

namespace diae::kern {

struct ConvDims {
    int n, ci, h, w, co, k, stride;
    int pad, ho, wo;

    static ConvDims make(int n, int ci, int h, int w, int co, int k, int stride) {
        require(k == 1 || k == 3, "conv2d: kernel must be 1 or 3");
        require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
        ConvDims d{n, ci, h, w, co, k, stride, 0, 0, 0};
        d.pad = k / 2;
        d.ho = (h + 2 * d.pad - k) / stride + 1;
        d.wo = (w + 2 * d.pad - k) / stride + 1;
        return d;
    }
    size_t col_rows() const { return size_t(ci) * k * k; }
    size_t col_cols() const { return size_t(ho) * wo; }
};

constexpr double kGnEps = 1e-5;

// ---------------------------------------------------------------- serial --
namespace serial {

template <class T>
void conv2d_fwd(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
    for (int n = 0; n < d.n; ++n)
        for (int co = 0; co < d.co; ++co)
            for (int oy = 0; oy < d.ho; ++oy)
                for (int ox = 0; ox < d.wo; ++ox) {
                    T acc = b ? b[co] : T(0);
                    for (int ci = 0; ci < d.ci; ++ci)
                        for (int ky = 0; ky < d.k; ++ky)
                            for (int kx = 0; kx < d.k; ++kx) {
                                const int iy = oy * d.stride + ky - d.pad;
                                const int ix = ox * d.stride + kx - d.pad;
                                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                                acc += x[((size_t(n) * d.ci + ci) * d.h + iy) * d.w + ix] *
                                       w[((size_t(co) * d.ci + ci) * d.k + ky) * d.k + kx];
                            }
                    y[((size_t(n) * d.co + co) * d.ho + oy) * d.wo + ox] = acc;
                }
}

template <class T>
void silu_fwd(const T* x, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
}

template <class T>
void silu_bwd(const T* x, const T* dy, T* dx, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        dx[i] += dy[i] * s * (T(1) + x[i] * (T(1) - s));
    }
}

template <class T>
void groupnorm_fwd(int n, int c, int hw, int groups, const T* x, const T* gamma,
                   const T* beta, T* y, T* mean, T* invstd) {
    const int cpg = c / groups;
    const size_t gsz = size_t(cpg) * hw;
    for (int ni = 0; ni < n; ++ni)
        for (int g = 0; g < groups; ++g) {
            const T* xg = x + (size_t(ni) * c + size_t(g) * cpg) * hw;
            double s = 0.0, s2 = 0.0;
            for (size_t i = 0; i < gsz; ++i) {
                const double v = double(xg[i]);
                s += v;
                s2 += v * v;
            }
            const double m = s / double(gsz);
            const double var = std::max(0.0, s2 / double(gsz) - m * m);
            const double is = 1.0 / std::sqrt(var + kGnEps);
            mean[size_t(ni) * groups + g] = T(m);
            invstd[size_t(ni) * groups + g] = T(is);
            T* yg = y + (size_t(ni) * c + size_t(g) * cpg) * hw;
            for (int cc = 0; cc < cpg; ++cc) {
                const T ga = gamma[size_t(g) * cpg + cc];
                const T be = beta[size_t(g) * cpg + cc];
                for (int i = 0; i < hw; ++i) {
                    const size_t off = size_t(cc) * hw + i;
                    yg[off] = T((double(xg[off]) - m) * is) * ga + be;
                }
            }
        }
}

} // namespace serial

// ------------------------------------------------------------------- par --
namespace par {

template <class T>
void im2col(const ConvDims& d, const T* x, T* col) {
    // col layout: [n][ci*k*k][ho*wo]
    const size_t rows = d.col_rows(), cols = d.col_cols();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n)
        for (int r = 0; r < int(rows); ++r) {
            const int ci = r / (d.k * d.k);
            const int ky = (r / d.k) % d.k;
            const int kx = r % d.k;
            const T* xs = x + (size_t(n) * d.ci + ci) * d.h * d.w;
            T* dst = col + (size_t(n) * rows + r) * cols;
            for (int oy = 0; oy < d.ho; ++oy) {
                const int iy = oy * d.stride + ky - d.pad;
                T* drow = dst + size_t(oy) * d.wo;
                if (iy < 0 || iy >= d.h) {
                    for (int ox = 0; ox < d.wo; ++ox) drow[ox] = T(0);
                    continue;
                }
                const T* xrow = xs + size_t(iy) * d.w;
                for (int ox = 0; ox < d.wo; ++ox) {
                    const int ix = ox * d.stride + kx - d.pad;
                    drow[ox] = (ix < 0 || ix >= d.w) ? T(0) : xrow[ix];
                }
            }
        }
}

// y = w * col per sample; if col_save != nullptr the column buffer is kept
// for the weight-gradient pass. One single-threaded GEMM per sample, samples
// in parallel.
template <class T>
void conv2d_fwd(const ConvDims& d, const T* x, const T* w, const T* b, T* y,
                T* col_save, std::vector<T>& scratch) {
    const size_t rows = d.col_rows(), cols = d.col_cols();
    const bool direct = (d.k == 1 && d.stride == 1); // 1x1: input is the column matrix
    T* col = nullptr;
    if (!direct) {
        if (col_save) {
            col = col_save;
        } else {
            scratch.resize(size_t(d.n) * rows * cols);
            col = scratch.data();
        }
        im2col(d, x, col);
    }
#pragma omp parallel for schedule(static)
    for (int n = 0; n < d.n; ++n) {
        const T* bn = direct ? x + size_t(n) * rows * cols
                             : col + size_t(n) * rows * cols;
        T* yn = y + size_t(n) * d.co * cols;
        gemm_st(Trans::N, Trans::N, d.co, int(cols), int(rows), T(1), w,
                int(rows), bn, int(cols), T(0), yn, int(cols));
        if (b)
            for (int co = 0; co < d.co; ++co) {
                const T bv = b[co];
                T* yr = yn + size_t(co) * cols;
#pragma omp simd
                for (size_t i = 0; i < cols; ++i) yr[i] += bv;
            }
    }
}

// dx via dcol = w^T * dy then a gather-style col2im (each input element sums
// its own contributions in a fixed order).
template <class T>
void conv2d_dgrad(const ConvDims& d, const T* w, const T* dy, T* dx,
                  std::vector<T>& scratch) {
    const size_t rows = d.col_rows(), cols = d.col_cols();
    scratch.resize(size_t(d.n) * rows * cols);
    T* dcol = scratch.data();
#pragma omp parallel for schedule(static)
    for (int n = 0; n < d.n; ++n)
        gemm_st(Trans::T, Trans::N, int(rows), int(cols), d.co, T(1), w,
                int(rows), dy + size_t(n) * d.co * cols, int(cols), T(0),
                dcol + size_t(n) * rows * cols, int(cols));
    if (d.stride == 1 && d.k == 3) {
        // all nine taps reduce to shifted contiguous row adds
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < d.n; ++n)
            for (int ci = 0; ci < d.ci; ++ci) {
                const T* dc = dcol + (size_t(n) * d.ci + ci) * 9 * cols;
                T* dxs = dx + (size_t(n) * d.ci + ci) * d.h * d.w;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const T* src = dc + size_t(ky * 3 + kx) * cols;
                        const int iy0 = std::max(0, ky - 1);
                        const int iy1 = std::min(d.h, d.h + ky - 1);
                        const int ix0 = std::max(0, kx - 1);
                        const int ix1 = std::min(d.w, d.w + kx - 1);
                        for (int iy = iy0; iy < iy1; ++iy) {
                            const T* srow =
                                src + size_t(iy + 1 - ky) * d.wo + (ix0 + 1 - kx);
                            T* drow = dxs + size_t(iy) * d.w + ix0;
#pragma omp simd
                            for (int i = 0; i < ix1 - ix0; ++i) drow[i] += srow[i];
                        }
                    }
            }
        return;
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n)
        for (int ci = 0; ci < d.ci; ++ci) {
            const T* dc = dcol + size_t(n) * rows * cols;
            for (int iy = 0; iy < d.h; ++iy)
                for (int ix = 0; ix < d.w; ++ix) {
                    T acc = T(0);
                    for (int ky = 0; ky < d.k; ++ky) {
                        const int ty = iy + d.pad - ky;
                        if (ty % d.stride) continue;
                        const int oy = ty / d.stride;
                        if (oy < 0 || oy >= d.ho) continue;
                        for (int kx = 0; kx < d.k; ++kx) {
                            const int tx = ix + d.pad - kx;
                            if (tx % d.stride) continue;
                            const int ox = tx / d.stride;
                            if (ox < 0 || ox >= d.wo) continue;
                            acc += dc[((size_t(ci) * d.k + ky) * d.k + kx) * cols +
                                      size_t(oy) * d.wo + ox];
                        }
                    }
                    dx[((size_t(n) * d.ci + ci) * d.h + iy) * d.w + ix] += acc;
                }
        }
}

// dw += sum_n dy_n * col_n^T; per-sample partials in parallel, then an
// ordered reduction over samples.
template <class T>
void conv2d_wgrad(const ConvDims& d, const T* x, const T* col_saved, const T* dy,
                  T* dw, T* db, std::vector<T>& scratch) {
    const size_t rows = d.col_rows(), cols = d.col_cols();
    const bool direct = (d.k == 1 && d.stride == 1);
    const T* col = col_saved;
    std::vector<T> colbuf;
    if (!direct && !col) {
        colbuf.resize(size_t(d.n) * rows * cols);
        im2col(d, x, colbuf.data());
        col = colbuf.data();
    }
    if (direct) col = x;
    const size_t wsz = size_t(d.co) * rows;
    scratch.resize(size_t(d.n) * wsz);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < d.n; ++n)
        gemm_st(Trans::N, Trans::T, d.co, int(rows), int(cols), T(1),
                dy + size_t(n) * d.co * cols, int(cols),
                col + size_t(n) * rows * cols, int(cols), T(0),
                scratch.data() + size_t(n) * wsz, int(rows));
    for (int n = 0; n < d.n; ++n) {
        const T* part = scratch.data() + size_t(n) * wsz;
        for (size_t i = 0; i < wsz; ++i) dw[i] += part[i];
    }
    if (db) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < d.co; ++co) {
            double acc = 0.0;
            for (int n = 0; n < d.n; ++n) {
                const T* dyr = dy + (size_t(n) * d.co + co) * cols;
                for (size_t i = 0; i < cols; ++i) acc += double(dyr[i]);
            }
            db[co] += T(acc);
        }
    }
}

template <class T>
void silu_fwd(const T* x, T* y, size_t n) {
#pragma omp parallel for simd schedule(static)
    for (size_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
}

template <class T>
void silu_bwd(const T* x, const T* dy, T* dx, size_t n) {
#pragma omp parallel for simd schedule(static)
    for (size_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        dx[i] += dy[i] * s * (T(1) + x[i] * (T(1) - s));
    }
}

#if defined(__AVX512F__) && defined(DIAE_USE_LIBMVEC)
// float SiLU through libmvec's 16-lane expf; vector blocks by index, scalar
// tail, so the lane split never depends on the thread count.
extern "C" __m512 _ZGVeN16v_expf(__m512);

inline void silu_fwd(const float* x, float* y, size_t n) {
    const size_t nvec = n / 16 * 16;
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < nvec; i += 16) {
        const __m512 xv = _mm512_loadu_ps(x + i);
        const __m512 e = _ZGVeN16v_expf(_mm512_sub_ps(_mm512_setzero_ps(), xv));
        const __m512 s = _mm512_div_ps(_mm512_set1_ps(1.0f),
                                       _mm512_add_ps(_mm512_set1_ps(1.0f), e));
        _mm512_storeu_ps(y + i, _mm512_mul_ps(xv, s));
    }
    for (size_t i = nvec; i < n; ++i) {
        const float s = 1.0f / (1.0f + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
}

inline void silu_bwd(const float* x, const float* dy, float* dx, size_t n) {
    const size_t nvec = n / 16 * 16;
    const __m512 one = _mm512_set1_ps(1.0f);
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < nvec; i += 16) {
        const __m512 xv = _mm512_loadu_ps(x + i);
        const __m512 e = _ZGVeN16v_expf(_mm512_sub_ps(_mm512_setzero_ps(), xv));
        const __m512 s = _mm512_div_ps(one, _mm512_add_ps(one, e));
        const __m512 g = _mm512_mul_ps(
            _mm512_mul_ps(_mm512_loadu_ps(dy + i), s),
            _mm512_fmadd_ps(xv, _mm512_sub_ps(one, s), one));
        _mm512_storeu_ps(dx + i, _mm512_add_ps(_mm512_loadu_ps(dx + i), g));
    }
    for (size_t i = nvec; i < n; ++i) {
        const float s = 1.0f / (1.0f + std::exp(-x[i]));
        dx[i] += dy[i] * s * (1.0f + x[i] * (1.0f - s));
    }
}
#endif

template <class T>
void groupnorm_fwd(int n, int c, int hw, int groups, const T* x, const T* gamma,
                   const T* beta, T* y, T* mean, T* invstd) {
    const int cpg = c / groups;
    const size_t gsz = size_t(cpg) * hw;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni)
        for (int g = 0; g < groups; ++g) {
            const T* xg = x + (size_t(ni) * c + size_t(g) * cpg) * hw;
            double s = 0.0, s2 = 0.0;
#pragma omp simd reduction(+ : s, s2)
            for (size_t i = 0; i < gsz; ++i) {
                const double v = double(xg[i]);
                s += v;
                s2 += v * v;
            }
            const double m = s / double(gsz);
            const double var = std::max(0.0, s2 / double(gsz) - m * m);
            const double is = 1.0 / std::sqrt(var + kGnEps);
            mean[size_t(ni) * groups + g] = T(m);
            invstd[size_t(ni) * groups + g] = T(is);
            T* yg = y + (size_t(ni) * c + size_t(g) * cpg) * hw;
            for (int cc = 0; cc < cpg; ++cc) {
                const T ga = gamma[size_t(g) * cpg + cc];
                const T be = beta[size_t(g) * cpg + cc];
#pragma omp simd
                for (int i = 0; i < hw; ++i) {
                    const size_t off = size_t(cc) * hw + i;
                    yg[off] = T((double(xg[off]) - m) * is) * ga + be;
                }
            }
        }
}

template <class T>
void groupnorm_bwd(int n, int c, int hw, int groups, const T* x, const T* gamma,
                   const T* mean, const T* invstd, const T* dy, T* dx, T* dgamma,
                   T* dbeta) {
    const int cpg = c / groups;
    const double gsz = double(cpg) * hw;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni)
        for (int g = 0; g < groups; ++g) {
            const size_t base = (size_t(ni) * c + size_t(g) * cpg) * hw;
            const double m = double(mean[size_t(ni) * groups + g]);
            const double is = double(invstd[size_t(ni) * groups + g]);
            double s1 = 0.0, s2 = 0.0;
            for (int cc = 0; cc < cpg; ++cc) {
                const double ga = double(gamma[size_t(g) * cpg + cc]);
                const T* xr = x + base + size_t(cc) * hw;
                const T* dyr = dy + base + size_t(cc) * hw;
#pragma omp simd reduction(+ : s1, s2)
                for (int i = 0; i < hw; ++i) {
                    const double xhat = (double(xr[i]) - m) * is;
                    const double dxh = double(dyr[i]) * ga;
                    s1 += dxh;
                    s2 += dxh * xhat;
                }
            }
            s1 /= gsz;
            s2 /= gsz;
            for (int cc = 0; cc < cpg; ++cc) {
                const double ga = double(gamma[size_t(g) * cpg + cc]);
                const T* xr = x + base + size_t(cc) * hw;
                const T* dyr = dy + base + size_t(cc) * hw;
                T* dxr = dx + base + size_t(cc) * hw;
#pragma omp simd
                for (int i = 0; i < hw; ++i) {
                    const double xhat = (double(xr[i]) - m) * is;
                    const double dxh = double(dyr[i]) * ga;
                    dxr[i] += T(is * (dxh - s1 - xhat * s2));
                }
            }
        }
    // per-channel sums over samples in fixed order
#pragma omp parallel for schedule(static)
    for (int cc = 0; cc < c; ++cc) {
        const int g = cc / cpg;
        double dg = 0.0, dbv = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const double m = double(mean[size_t(ni) * groups + g]);
            const double is = double(invstd[size_t(ni) * groups + g]);
            const T* xr = x + (size_t(ni) * c + cc) * hw;
            const T* dyr = dy + (size_t(ni) * c + cc) * hw;
#pragma omp simd reduction(+ : dg, dbv)
            for (int i = 0; i < hw; ++i) {
                dg += double(dyr[i]) * (double(xr[i]) - m) * is;
                dbv += double(dyr[i]);
            }
        }
        dgamma[cc] += T(dg);
        dbeta[cc] += T(dbv);
    }
}

} // namespace par

// ------------------------------------------------------- shared reductions --

// Mean of squared differences with a fixed chunked summation order, identical
// for the serial and parallel paths. Fast mode uses an OpenMP reduction.
template <class T>
T mse_value(const T* a, const T* b, size_t n) {
    constexpr size_t kChunk = 4096;
    const size_t nchunks = (n + kChunk - 1) / kChunk;
    if (!exec().deterministic) {
        double acc = 0.0;
#pragma omp parallel for reduction(+ : acc) schedule(static)
        for (size_t i = 0; i < n; ++i) {
            const double d = double(a[i]) - double(b[i]);
            acc += d * d;
        }
        return T(acc / double(n));
    }
    std::vector<double> partial(nchunks);
    const bool serial = exec().serial_reference;
#pragma omp parallel for schedule(static) if (!serial)
    for (size_t c = 0; c < nchunks; ++c) {
        const size_t lo = c * kChunk, hi = std::min(n, lo + kChunk);
        double acc = 0.0;
        for (size_t i = lo; i < hi; ++i) {
            const double d = double(a[i]) - double(b[i]);
            acc += d * d;
        }
        partial[c] = acc;
    }
    double total = 0.0;
    for (size_t c = 0; c < nchunks; ++c) total += partial[c];
    return T(total / double(n));
}

// --------------------------------------------------------------- dispatch --

template <class T>
void conv2d_fwd(const ConvDims& d, const T* x, const T* w, const T* b, T* y,
                T* col_save = nullptr) {
    if (exec().serial_reference) {
        serial::conv2d_fwd(d, x, w, b, y);
        if (col_save) par::im2col(d, x, col_save);
        return;
    }
    thread_local std::vector<T> scratch;
    par::conv2d_fwd(d, x, w, b, y, col_save, scratch);
}

template <class T>
void conv2d_dgrad(const ConvDims& d, const T* w, const T* dy, T* dx) {
    thread_local std::vector<T> scratch;
    par::conv2d_dgrad(d, w, dy, dx, scratch);
}

template <class T>
void conv2d_wgrad(const ConvDims& d, const T* x, const T* col_saved, const T* dy,
                  T* dw, T* db) {
    thread_local std::vector<T> scratch;
    par::conv2d_wgrad(d, x, col_saved, dy, dw, db, scratch);
}

template <class T>
void silu_fwd(const T* x, T* y, size_t n) {
    if (exec().serial_reference)
        serial::silu_fwd(x, y, n);
    else
        par::silu_fwd(x, y, n);
}

template <class T>
void silu_bwd(const T* x, const T* dy, T* dx, size_t n) {
    if (exec().serial_reference)
        serial::silu_bwd(x, dy, dx, n);
    else
        par::silu_bwd(x, dy, dx, n);
}

template <class T>
void groupnorm_fwd(int n, int c, int hw, int groups, const T* x, const T* gamma,
                   const T* beta, T* y, T* mean, T* invstd) {
    if (exec().serial_reference)
        serial::groupnorm_fwd(n, c, hw, groups, x, gamma, beta, y, mean, invstd);
    else
        par::groupnorm_fwd(n, c, hw, groups, x, gamma, beta, y, mean, invstd);
}

template <class T>
void groupnorm_bwd(int n, int c, int hw, int groups, const T* x, const T* gamma,
                   const T* mean, const T* invstd, const T* dy, T* dx, T* dgamma,
                   T* dbeta) {
    par::groupnorm_bwd(n, c, hw, groups, x, gamma, mean, invstd, dy, dx, dgamma,
                       dbeta);
}

} // namespace diae::kern
