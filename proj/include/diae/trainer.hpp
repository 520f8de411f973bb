#pragma once

#include <optional>
#include <string>
#include <vector>

#include "diae/config.hpp"
#include "diae/dataset.hpp"
#include "diae/optim.hpp"
#include "diae/schedule.hpp"
#include "diae/unet.hpp"

namespace diae {

constexpr int kAttrWidth = 64;

struct ModelConfig {
    UNetConfig unet;
    AdapterConfig adapter;
    int attr_vocab = Vocab::kSize;
    int num_captions = 16;

    static ModelConfig from_run(const RunConfig& cfg);
};

void model_init(ParamStore<float>& params, const ModelConfig& mc, uint64_t seed);

// Timestep folding for the input-supervised branch. `folded` maps t to
// t mod t_s (1-based, so a zero residue means t_s itself); `gated` drops the
// branch entirely above the threshold.
std::optional<int> fold_timestep(int t, int t_s, FoldPolicy policy);

// One training batch, stacked.
struct Batch {
    Tensor<float> x_inp, x_ref; // [N,3,S,S]
    Tensor<float> hsv, contour; // from the input image
    std::vector<std::vector<int>> color_tokens, structure_tokens, caption_ids;
    std::vector<int> ts;                // shared per-sample timestep
    Tensor<float> eps_ref, eps_inp;     // [N,3,S,S]
};

struct DualLossNodes {
    int loss = -1;
    int l_ref = -1;
    int l_inp = -1; // -1 when the input branch is absent this step
};

// L = L_ref + lambda * L_inp (Batch pre-cast to T for the oracle path).
// Control signals are built from the input image and shared by both branches;
// the reference branch noises x_ref at t, the input branch noises x_inp at
// the folded timestep with its own noise.
template <class T>
DualLossNodes dual_loss_graph(Graph<T>& g, const BoundParams<T>& P,
                              const ModelConfig& mc, const RunConfig& cfg,
                              const NoiseSchedule& sched, const Tensor<T>& x_inp,
                              const Tensor<T>& x_ref, const Tensor<T>& hsv,
                              const Tensor<T>& contour,
                              const std::vector<std::vector<int>>& color_tokens,
                              const std::vector<std::vector<int>>& structure_tokens,
                              const std::vector<std::vector<int>>& caption_ids,
                              const std::vector<int>& ts, const Tensor<T>& eps_ref,
                              const Tensor<T>& eps_inp) {
    const int n = x_inp.dim(0);
    const int side = mc.unet.side;
    require(int(ts.size()) == n, "dual_loss: one timestep per sample");
    for (int t : ts)
        require(t >= 1 && t <= cfg.t_total, "dual_loss: timestep out of range");
    require(sched.steps == cfg.t_total, "dual_loss: schedule/config mismatch");

    const MapMode map = cfg.map();

    // conditioning, from the input image in both branches
    CondNodes cond;
    if (map != MapMode::NoVisual) {
        const int hsv_id = g.leaf(hsv);
        const int con_id = g.leaf(contour);
        auto feats = encode_visual_graph(g, P, mc.adapter, hsv_id, con_id);
        cond.vis_col = std::move(feats.first);
        cond.vis_str = std::move(feats.second);
    } else {
        for (size_t l = 0; l < mc.adapter.widths.size(); ++l) {
            const int s = side >> l;
            cond.vis_col.push_back(g.leaf(Tensor<T>({n, mc.adapter.widths[l], s, s})));
            cond.vis_str.push_back(g.leaf(Tensor<T>({n, mc.adapter.widths[l], s, s})));
        }
    }
    if (map != MapMode::NoText) {
        cond.txt_col = g.embed_mean(P["embed.attr"], color_tokens);
        cond.txt_str = g.embed_mean(P["embed.attr"], structure_tokens);
    } else {
        cond.txt_col = g.leaf(Tensor<T>({n, kAttrWidth}));
        cond.txt_str = g.leaf(Tensor<T>({n, kAttrWidth}));
    }
    const int cap = g.embed_mean(P["embed.caption"], caption_ids);

    // reference branch, all timesteps
    Tensor<T> x_t_ref({n, 3, side, side});
    for (int i = 0; i < n; ++i) {
        const double ab = sched.abar(ts[size_t(i)]);
        const T c0 = T(std::sqrt(ab)), c1 = T(std::sqrt(1.0 - ab));
        const size_t sz = size_t(3) * side * side;
        for (size_t j = 0; j < sz; ++j)
            x_t_ref[size_t(i) * sz + j] =
                c0 * x_ref[size_t(i) * sz + j] + c1 * eps_ref[size_t(i) * sz + j];
    }
    const int eps_hat_ref =
        unet_forward(g, P, mc.unet, g.leaf(std::move(x_t_ref)), g.leaf(x_ref), ts,
                     cap, &cond);
    DualLossNodes out;
    out.l_ref = g.mse(g.leaf(eps_ref), eps_hat_ref);

    // input branch at folded timesteps
    std::vector<int> keep, tp;
    for (int i = 0; i < n; ++i)
        if (auto f = fold_timestep(ts[size_t(i)], cfg.t_s, cfg.fold())) {
            keep.push_back(i);
            tp.push_back(*f);
        }
    if (cfg.branch() == BranchMode::ReferenceOnly || keep.empty()) {
        out.loss = out.l_ref;
        return out;
    }

    const int m = int(keep.size());
    const size_t sz = size_t(3) * side * side;
    Tensor<T> x_t_inp({m, 3, side, side}), x_inp_sel({m, 3, side, side}),
        eps_inp_sel({m, 3, side, side});
    for (int i = 0; i < m; ++i) {
        const int src = keep[size_t(i)];
        const double ab = sched.abar(tp[size_t(i)]);
        const T c0 = T(std::sqrt(ab)), c1 = T(std::sqrt(1.0 - ab));
        for (size_t j = 0; j < sz; ++j) {
            const T xi = x_inp[size_t(src) * sz + j];
            const T ei = eps_inp[size_t(src) * sz + j];
            x_inp_sel[size_t(i) * sz + j] = xi;
            eps_inp_sel[size_t(i) * sz + j] = ei;
            x_t_inp[size_t(i) * sz + j] = c0 * xi + c1 * ei;
        }
    }
    CondNodes cond_sel = cond;
    int cap_sel = cap;
    std::vector<std::vector<int>> cap_sel_ids;
    if (m != n) {
        for (auto& v : cond_sel.vis_col) v = g.select_rows(v, keep);
        for (auto& v : cond_sel.vis_str) v = g.select_rows(v, keep);
        cond_sel.txt_col = g.select_rows(cond.txt_col, keep);
        cond_sel.txt_str = g.select_rows(cond.txt_str, keep);
        cap_sel = g.select_rows(cap, keep);
    }
    const int eps_hat_inp =
        unet_forward(g, P, mc.unet, g.leaf(std::move(x_t_inp)),
                     g.leaf(std::move(x_inp_sel)), tp, cap_sel, &cond_sel);
    out.l_inp = g.mse(g.leaf(std::move(eps_inp_sel)), eps_hat_inp);
    out.loss = g.add(out.l_ref, g.scale(out.l_inp, T(cfg.lambda_inp)));
    return out;
}

struct StepStats {
    double loss = 0.0, l_ref = 0.0, l_inp = 0.0;
};

struct TrainerState {
    RunConfig cfg;
    ModelConfig mcfg;
    NoiseSchedule sched;
    ParamStore<float> params;
    AdamW<float> opt;
    int64_t step = 0;
};

TrainerState init_trainer(const RunConfig& cfg);

Batch draw_batch(const TrainerState& st, const std::vector<TrainSample>& data);

StepStats train_step(TrainerState& st, const std::vector<TrainSample>& data);

// Runs cfg.steps steps, appending to metrics.csv and writing periodic
// checkpoints plus checkpoint.diae under out_dir.
std::string train_loop(TrainerState& st, const std::vector<TrainSample>& data,
                       const std::string& out_dir, bool quiet = false);

void save_trainer_checkpoint(const TrainerState& st, const std::string& path);
TrainerState load_trainer_checkpoint(const std::string& path,
                                     const RunConfig* override_cfg = nullptr);

} // namespace diae
