#pragma once

#include <functional>
#include <string>

#include "diae/params.hpp"
#include "diae/rng.hpp"
#include "diae/tensor.hpp"

namespace diae {

// Central-difference gradient oracle. Kept independent of the autodiff path:
// it only ever calls the supplied scalar function.
template <class T>
ParamStore<T> finite_diff_grad(const std::function<T(const ParamStore<T>&)>& f,
                               const ParamStore<T>& params, double h) {
    require(h > 0.0, "finite_diff_grad: h must be positive");
    ParamStore<T> grads;
    ParamStore<T> work = params.template cast<T>();
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T> g(params.tensor(i).shape);
        Tensor<T>& t = work.tensor(i);
        for (size_t j = 0; j < t.numel(); ++j) {
            const T orig = t[j];
            t[j] = T(double(orig) + h);
            const double fp = double(f(work));
            t[j] = T(double(orig) - h);
            const double fm = double(f(work));
            t[j] = orig;
            require(std::isfinite(fp) && std::isfinite(fm),
                    "finite_diff_grad: non-finite evaluation");
            g[j] = T((fp - fm) / (2.0 * h));
        }
        grads.add(params.name(i), std::move(g));
    }
    return grads;
}

struct FdCheckReport {
    double max_rel = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
    double worst_analytic = 0.0, worst_fd = 0.0;
    size_t coords_checked = 0;

    bool pass(double tol) const { return max_rel < tol; }
};

inline double rel_error(double a, double b, double floor) {
    const double denom = std::max(floor, std::max(std::fabs(a), std::fabs(b)));
    return std::fabs(a - b) / denom;
}

// Compares analytic gradients against central differences of `f64` at a
// deterministic sample of coordinates per tensor. The oracle runs the whole
// model in double regardless of the precision the analytic pass used.
inline FdCheckReport sampled_fd_check(
    const std::function<double(const ParamStore<double>&)>& f64,
    const ParamStore<double>& params64,
    const std::function<double(const std::string&, size_t)>& analytic,
    int coords_per_tensor, double h, double denom_floor, uint64_t seed) {
    FdCheckReport rep;
    ParamStore<double> work = params64.cast<double>();
    for (size_t i = 0; i < work.size(); ++i) {
        Tensor<double>& t = work.tensor(i);
        const std::string& name = work.name(i);
        Rng rng(derive_seed(seed, 0x6664636865636bull, i));
        const size_t n = t.numel();
        const size_t count = std::min<size_t>(size_t(coords_per_tensor), n);
        for (size_t k = 0; k < count; ++k) {
            // first coordinate always included, rest sampled
            const size_t j = (k == 0) ? 0 : size_t(rng.below(n));
            const double orig = t[j];
            t[j] = orig + h;
            const double fp = f64(work);
            t[j] = orig - h;
            const double fm = f64(work);
            t[j] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic(name, j);
            const double rel = rel_error(an, fd, denom_floor);
            rep.coords_checked += 1;
            if (rel > rep.max_rel) {
                rep.max_rel = rel;
                rep.worst_param = name;
                rep.worst_index = j;
                rep.worst_analytic = an;
                rep.worst_fd = fd;
            }
        }
    }
    return rep;
}

} // namespace diae
