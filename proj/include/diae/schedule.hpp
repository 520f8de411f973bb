#pragma once

#include <vector>

#include "diae/tensor.hpp"

namespace diae {

// Linear beta schedule with exact cumulative products, all in double.
// Timesteps are 1-based: arrays index t-1.
struct NoiseSchedule {
    int steps = 0;
    std::vector<double> beta, alpha, alpha_bar;

    static NoiseSchedule linear(int T, double beta_start, double beta_end) {
        require(T >= 2, "schedule: T must be at least 2");
        require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
                "schedule: need 0 < beta_start <= beta_end < 1");
        NoiseSchedule s;
        s.steps = T;
        s.beta.resize(size_t(T));
        s.alpha.resize(size_t(T));
        s.alpha_bar.resize(size_t(T));
        double prod = 1.0;
        for (int t = 0; t < T; ++t) {
            s.beta[size_t(t)] =
                beta_start + (beta_end - beta_start) * double(t) / double(T - 1);
            s.alpha[size_t(t)] = 1.0 - s.beta[size_t(t)];
            prod *= s.alpha[size_t(t)];
            s.alpha_bar[size_t(t)] = prod;
        }
        return s;
    }

    double abar(int t) const {
        require(t >= 1 && t <= steps, "schedule: timestep out of range");
        return alpha_bar[size_t(t - 1)];
    }
    double beta_at(int t) const {
        require(t >= 1 && t <= steps, "schedule: timestep out of range");
        return beta[size_t(t - 1)];
    }
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
template <class T>
Tensor<T> forward_noise(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                        const NoiseSchedule& s) {
    require(x0.shape == eps.shape, "forward_noise: shape mismatch");
    const double ab = s.abar(t);
    const T c0 = T(std::sqrt(ab));
    const T c1 = T(std::sqrt(1.0 - ab));
    Tensor<T> out(x0.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = c0 * x0[i] + c1 * eps[i];
    return out;
}

} // namespace diae
