#pragma once

#include <algorithm>
#include <cstdlib>
#include <mutex>

#include <malloc.h>

#include <omp.h>

#ifdef DIAE_USE_OPENBLAS
extern "C" void openblas_set_num_threads(int);
#endif

namespace diae {

// Runtime execution switches. Deterministic mode (the default) pins every
// reduction to a fixed summation order; the opt-in fast mode lets the big
// loss reductions use an unordered OpenMP reduction. serial_reference routes
// all kernels through the plain serial implementations kept for testing.
struct ExecConfig {
    bool deterministic = true;
    bool serial_reference = false;
    // full per-op finite scans; the trainer always checks the loss scalar
    bool check_finite = false;
};

inline ExecConfig& exec() {
    static ExecConfig cfg;
    return cfg;
}

inline void apply_thread_count(int n) {
    n = std::max(1, n);
    omp_set_num_threads(n);
#ifdef DIAE_USE_OPENBLAS
    // BLAS stays single-threaded; parallelism lives in the OpenMP loops over
    // samples, which profiles much faster at these problem sizes.
    openblas_set_num_threads(1);
#endif
}

// DIAE_THREADS overrides the OpenMP default once, at first use.
inline int thread_count() {
    static int n = [] {
        // keep big freed blocks reusable instead of returning them to the
        // kernel; graphs reallocate the same activation sizes every step
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        int t = omp_get_max_threads();
        if (const char* env = std::getenv("DIAE_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) t = v;
        }
        apply_thread_count(t);
        return t;
    }();
    return n;
}

inline void init_threading() { (void)thread_count(); }

} // namespace diae
