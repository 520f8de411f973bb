#pragma once

#include <cmath>

#include "diae/params.hpp"
#include "diae/tensor.hpp"

namespace diae {

// AdamW with decoupled weight decay: the decay shrinks parameters directly
// and does not pass through the moment estimates.
template <class T>
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    struct State {
        Tensor<T> m, v;
    };
    std::vector<State> state;
    int64_t step_count = 0;

    void init(const ParamStore<T>& params) {
        state.clear();
        state.reserve(params.size());
        for (size_t i = 0; i < params.size(); ++i)
            state.push_back({Tensor<T>(params.tensor(i).shape),
                             Tensor<T>(params.tensor(i).shape)});
        step_count = 0;
    }

    // grads[i] may be null (parameter untouched this step: moments still decay)
    void step(ParamStore<T>& params, const std::vector<const Tensor<T>*>& grads) {
        require(state.size() == params.size(), "adamw: state/param mismatch");
        require(grads.size() == params.size(), "adamw: grad count mismatch");
        step_count += 1;
        const double bc1 = 1.0 - std::pow(beta1, double(step_count));
        const double bc2 = 1.0 - std::pow(beta2, double(step_count));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor<T>& p = params.tensor(i);
            Tensor<T>& m = state[i].m;
            Tensor<T>& v = state[i].v;
            if (grads[i]) {
                require(grads[i]->shape == p.shape,
                        "adamw: grad shape mismatch for " + params.name(i));
            }
            const size_t n = p.numel();
            const T* g = grads[i] ? grads[i]->ptr() : nullptr;
#pragma omp parallel for simd schedule(static)
            for (size_t j = 0; j < n; ++j) {
                const double gj = g ? double(g[j]) : 0.0;
                const double mj = beta1 * double(m[j]) + (1.0 - beta1) * gj;
                const double vj = beta2 * double(v[j]) + (1.0 - beta2) * gj * gj;
                m[j] = T(mj);
                v[j] = T(vj);
                double pj = double(p[j]);
                pj -= lr * weight_decay * pj;
                pj -= lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps);
                p[j] = T(pj);
            }
        }
    }
};

} // namespace diae
