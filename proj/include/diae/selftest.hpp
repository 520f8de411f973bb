#pragma once

#include <string>

#include "diae/config.hpp"

namespace diae {

struct GradCheckResult {
    double max_rel = 0.0;
    size_t coords = 0;
    std::string worst_param;
    double worst_analytic = 0.0, worst_fd = 0.0;
    double seconds = 0.0;
    bool pass = false;
};

// Full dual-loss gradient fidelity check: analytic float32 backprop over
// every trainable tensor against a float64 central-difference oracle, on one
// synthetic mini-batch. Tolerance 1e-3 max relative error, denominator floor
// 1e-6.
GradCheckResult selftest_grad(const RunConfig& cfg, int coords_per_tensor,
                              bool verbose);

// Schedule/forward-process/zero-init/sampler checks; returns the number of
// failed checks (0 = pass).
int selftest_diffusion(bool verbose);

} // namespace diae
