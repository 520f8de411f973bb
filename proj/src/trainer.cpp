#include "diae/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "diae/checkpoint_io.hpp"
#include "diae/rng.hpp"

namespace diae {

namespace {
// rng stream tags
constexpr uint64_t kTagInit = 0x696e6974ull;
constexpr uint64_t kTagBatch = 0x6261746368ull;
constexpr uint64_t kTagTstep = 0x747374657ull;
constexpr uint64_t kTagNoiseRef = 0x6e726566ull;
constexpr uint64_t kTagNoiseInp = 0x6e696e70ull;
} // namespace

ModelConfig ModelConfig::from_run(const RunConfig& cfg) {
    ModelConfig mc;
    mc.unet.side = cfg.side;
    mc.unet.base = cfg.base_channels;
    mc.unet.blocks = cfg.res_blocks;
    mc.unet.temb_width = cfg.temb_width;
    mc.unet.cap_width = cfg.cap_width;
    mc.unet.validate();
    mc.adapter.widths = {cfg.base_channels / 2, cfg.base_channels,
                         2 * cfg.base_channels};
    mc.adapter.text_width = kAttrWidth;
    mc.adapter.unet_widths = mc.unet.level_widths();
    mc.num_captions = cfg.corpus_keys;
    return mc;
}

void model_init(ParamStore<float>& params, const ModelConfig& mc, uint64_t seed) {
    Rng rng(derive_seed(seed, kTagInit));
    unet_init(params, mc.unet, rng);
    adapter_init(params, mc.adapter, rng);
    Tensor<float> attr({mc.attr_vocab, kAttrWidth});
    for (auto& v : attr.data) v = 0.2f * float(rng.normal());
    params.add("embed.attr", std::move(attr));
    Tensor<float> cap({mc.num_captions, mc.unet.cap_width});
    for (auto& v : cap.data) v = 0.2f * float(rng.normal());
    params.add("embed.caption", std::move(cap));
}

std::optional<int> fold_timestep(int t, int t_s, FoldPolicy policy) {
    require(t >= 1, "fold_timestep: timesteps are 1-based");
    require(t_s >= 1, "fold_timestep: t_s must be >= 1");
    switch (policy) {
    case FoldPolicy::Folded: {
        const int r = t % t_s;
        return r == 0 ? t_s : r;
    }
    case FoldPolicy::Gated:
        if (t <= t_s) return t;
        return std::nullopt;
    }
    throw TensorError("fold_timestep: invalid policy");
}

TrainerState init_trainer(const RunConfig& cfg) {
    cfg.validate();
    TrainerState st;
    st.cfg = cfg;
    st.mcfg = ModelConfig::from_run(cfg);
    st.sched = NoiseSchedule::linear(cfg.t_total, cfg.beta_start, cfg.beta_end);
    model_init(st.params, st.mcfg, cfg.seed);
    st.opt.lr = cfg.lr;
    st.opt.weight_decay = cfg.weight_decay;
    st.opt.init(st.params);
    exec().deterministic = cfg.deterministic;
    return st;
}

Batch draw_batch(const TrainerState& st, const std::vector<TrainSample>& data) {
    require(!data.empty(), "train: empty corpus");
    const RunConfig& cfg = st.cfg;
    const int n = cfg.batch_size;
    const int side = cfg.side;
    Batch b;
    b.x_inp = Tensor<float>({n, 3, side, side});
    b.x_ref = Tensor<float>({n, 3, side, side});
    b.hsv = Tensor<float>({n, 3, side, side});
    b.contour = Tensor<float>({n, 1, side, side});
    b.eps_ref = Tensor<float>({n, 3, side, side});
    b.eps_inp = Tensor<float>({n, 3, side, side});

    Rng pick(derive_seed(cfg.seed, kTagBatch, uint64_t(st.step)));
    Rng tstep(derive_seed(cfg.seed, kTagTstep, uint64_t(st.step)));
    const size_t img = size_t(3) * side * side;
    const size_t con = size_t(side) * side;
    for (int i = 0; i < n; ++i) {
        const TrainSample& s = data[pick.below(data.size())];
        require(s.x_inp.dim(1) == side, "train: corpus side differs from config");
        std::memcpy(b.x_inp.ptr() + size_t(i) * img, s.x_inp.ptr(),
                    img * sizeof(float));
        std::memcpy(b.x_ref.ptr() + size_t(i) * img, s.x_ref.ptr(),
                    img * sizeof(float));
        std::memcpy(b.hsv.ptr() + size_t(i) * img, s.hsv_inp.ptr(),
                    img * sizeof(float));
        std::memcpy(b.contour.ptr() + size_t(i) * con, s.contour_inp.ptr(),
                    con * sizeof(float));
        b.color_tokens.push_back(s.assessment.color_tokens);
        b.structure_tokens.push_back(s.assessment.structure_tokens);
        require(s.semantic_key < st.mcfg.num_captions,
                "train: semantic key exceeds caption table");
        b.caption_ids.push_back({s.semantic_key});
        b.ts.push_back(1 + int(tstep.below(uint64_t(cfg.t_total))));
        // both noises are always drawn so rng streams stay aligned across
        // branch modes and gating
        Rng nref(derive_seed(cfg.seed, kTagNoiseRef, uint64_t(st.step), uint64_t(i)));
        Rng ninp(derive_seed(cfg.seed, kTagNoiseInp, uint64_t(st.step), uint64_t(i)));
        nref.fill_normal(b.eps_ref.ptr() + size_t(i) * img, img);
        ninp.fill_normal(b.eps_inp.ptr() + size_t(i) * img, img);
    }
    return b;
}

StepStats train_step(TrainerState& st, const std::vector<TrainSample>& data) {
    const Batch b = draw_batch(st, data);
    Graph<float> g;
    const BoundParams<float> P = bind_params(g, st.params, true);
    const DualLossNodes nodes = dual_loss_graph<float>(
        g, P, st.mcfg, st.cfg, st.sched, b.x_inp, b.x_ref, b.hsv, b.contour,
        b.color_tokens, b.structure_tokens, b.caption_ids, b.ts, b.eps_ref,
        b.eps_inp);

    StepStats stats;
    stats.loss = double(g.val(nodes.loss)[0]);
    stats.l_ref = double(g.val(nodes.l_ref)[0]);
    stats.l_inp = nodes.l_inp >= 0 ? double(g.val(nodes.l_inp)[0]) : 0.0;
    if (!std::isfinite(stats.loss))
        throw TensorError("train: non-finite loss at step " +
                          std::to_string(st.step + 1) + " (l_ref=" +
                          std::to_string(stats.l_ref) + ", l_inp=" +
                          std::to_string(stats.l_inp) + ")");

    g.backward(nodes.loss);
    std::vector<const Tensor<float>*> grads(st.params.size(), nullptr);
    for (size_t i = 0; i < st.params.size(); ++i) {
        const int id = P[st.params.name(i)];
        if (!g.grad(id).empty()) grads[i] = &g.grad(id);
    }
    st.opt.step(st.params, grads);
    st.step += 1;
    return stats;
}

namespace {

std::string step_ckpt_name(int64_t step) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "checkpoint_step%06lld.diae",
                  static_cast<long long>(step));
    return buf;
}

} // namespace

std::string train_loop(TrainerState& st, const std::vector<TrainSample>& data,
                       const std::string& out_dir, bool quiet) {
    std::filesystem::create_directories(out_dir);
    const std::string metrics_path = out_dir + "/metrics.csv";
    const bool fresh = !std::filesystem::exists(metrics_path) || st.step == 0;
    std::ofstream metrics(metrics_path, fresh ? std::ios::trunc : std::ios::app);
    require(metrics.good(), "train: cannot write " + metrics_path);
    if (fresh) metrics << "step,loss,l_ref,l_inp,lr\n";

    const int64_t target = st.step + st.cfg.steps;
    while (st.step < target) {
        const StepStats s = train_step(st, data);
        if (st.cfg.log_interval > 0 && st.step % st.cfg.log_interval == 0) {
            char line[160];
            std::snprintf(line, sizeof(line), "%lld,%.8g,%.8g,%.8g,%.8g\n",
                          static_cast<long long>(st.step), s.loss, s.l_ref, s.l_inp,
                          st.cfg.lr);
            metrics << line;
            metrics.flush();
        }
        if (!quiet && st.step % 100 == 0)
            std::fprintf(stderr, "step %lld/%lld loss %.5f (ref %.5f inp %.5f)\n",
                         static_cast<long long>(st.step),
                         static_cast<long long>(target), s.loss, s.l_ref, s.l_inp);
        if (st.cfg.ckpt_interval > 0 && st.step % st.cfg.ckpt_interval == 0 &&
            st.step < target)
            save_trainer_checkpoint(st, out_dir + "/" + step_ckpt_name(st.step));
    }
    const std::string final_path = out_dir + "/checkpoint.diae";
    save_trainer_checkpoint(st, final_path);
    return final_path;
}

void save_trainer_checkpoint(const TrainerState& st, const std::string& path) {
    ParamStore<float> records;
    for (size_t i = 0; i < st.params.size(); ++i)
        records.add(st.params.name(i), st.params.tensor(i));
    for (size_t i = 0; i < st.params.size(); ++i) {
        records.add("adam.m." + st.params.name(i), st.opt.state[i].m);
        records.add("adam.v." + st.params.name(i), st.opt.state[i].v);
    }
    records.add("__step__", Tensor<float>({1}, {float(st.step)}));
    save_checkpoint(path, st.cfg.serialize(), records);
}

TrainerState load_trainer_checkpoint(const std::string& path,
                                     const RunConfig* override_cfg) {
    CheckpointData data = load_checkpoint(path);
    RunConfig cfg = parse_config_text(data.config_text, {});
    if (override_cfg) {
        // fine-tunes and ablations restart a warm checkpoint with new
        // schedule/threshold settings; model geometry must stay fixed
        RunConfig next = *override_cfg;
        require(next.side == cfg.side && next.base_channels == cfg.base_channels &&
                    next.res_blocks == cfg.res_blocks &&
                    next.temb_width == cfg.temb_width &&
                    next.cap_width == cfg.cap_width &&
                    next.corpus_keys == cfg.corpus_keys,
                "checkpoint: model geometry differs from requested config");
        cfg = next;
    }
    TrainerState st = init_trainer(cfg);
    for (size_t i = 0; i < st.params.size(); ++i) {
        const std::string& name = st.params.name(i);
        Tensor<float>& dst = st.params.tensor(i);
        const Tensor<float>& src = data.tensors.at(name);
        require(src.shape == dst.shape, "checkpoint: shape mismatch for " + name);
        dst = src;
        st.opt.state[i].m = data.tensors.at("adam.m." + name);
        st.opt.state[i].v = data.tensors.at("adam.v." + name);
    }
    st.step = int64_t(std::llround(double(data.tensors.at("__step__")[0])));
    st.opt.step_count = st.step;
    return st;
}

} // namespace diae
