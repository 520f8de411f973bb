#pragma once

#include <functional>
#include <vector>

#include "diae/schedule.hpp"
#include "diae/trainer.hpp"

namespace diae {

// Strided DDPM timestep subsequence: round(T*i/num_steps) for i = 1..num_steps,
// deduplicated, descending.
std::vector<int> sample_strides(int T, int num_steps);

// eps predictor over a batch: (x_t [N,3,S,S], per-sample t) -> eps_hat
using Predictor =
    std::function<Tensor<float>(const Tensor<float>&, const std::vector<int>&)>;

// Ancestral sampling along the strided subsequence with
//   x_prev = (x_t - beta_eff/sqrt(1-abar_t) * eps_hat)/sqrt(alpha_eff) + sigma*z
// where alpha_eff = abar_t/abar_prev; z = 0 on the final step. Only the final
// decode clamps to [0,1]. Per-sample seeds make results independent of batch
// composition.
Tensor<float> ancestral_sample(const NoiseSchedule& sched, int num_steps,
                               int side, const std::vector<uint64_t>& seeds,
                               const Predictor& predict,
                               const Tensor<float>* x_init = nullptr);

// Conditioning inputs for sampling a batch (everything derived from the
// input image and its metadata).
struct SampleInputs {
    Tensor<float> x_clean;      // [N,3,S,S]
    Tensor<float> hsv, contour; // from x_clean
    std::vector<std::vector<int>> color_tokens, structure_tokens, caption_ids;
};

SampleInputs make_sample_inputs(const std::vector<const TrainSample*>& samples,
                                int side);

// Visual conditioning features are encoded once per batch and reused across
// all denoising steps.
Tensor<float> sample_model(const ParamStore<float>& params, const ModelConfig& mc,
                           const RunConfig& cfg, const NoiseSchedule& sched,
                           const SampleInputs& in,
                           const std::vector<uint64_t>& seeds);

} // namespace diae
