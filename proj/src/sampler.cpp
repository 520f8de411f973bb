#include "diae/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "diae/rng.hpp"

namespace diae {

namespace {
constexpr uint64_t kTagXInit = 0x78696e6974ull;
constexpr uint64_t kTagZ = 0x7aull;
} // namespace

std::vector<int> sample_strides(int T, int num_steps) {
    require(num_steps >= 1 && num_steps <= T,
            "sample: num_steps must be in [1, T]");
    std::vector<int> ts;
    for (int i = 1; i <= num_steps; ++i) {
        const int t = int(std::llround(double(T) * double(i) / double(num_steps)));
        if (t >= 1 && (ts.empty() || t != ts.back())) ts.push_back(t);
    }
    std::reverse(ts.begin(), ts.end());
    return ts;
}

Tensor<float> ancestral_sample(const NoiseSchedule& sched, int num_steps,
                               int side, const std::vector<uint64_t>& seeds,
                               const Predictor& predict,
                               const Tensor<float>* x_init) {
    const int n = int(seeds.size());
    require(n > 0, "sample: empty batch");
    const std::vector<int> ts = sample_strides(sched.steps, num_steps);
    const size_t img = size_t(3) * side * side;

    Tensor<float> x({n, 3, side, side});
    if (x_init) {
        require(x_init->shape == x.shape, "sample: x_init shape mismatch");
        x = *x_init;
    } else {
        for (int i = 0; i < n; ++i) {
            Rng rng(derive_seed(seeds[size_t(i)], kTagXInit));
            rng.fill_normal(x.ptr() + size_t(i) * img, img);
        }
    }

    for (size_t k = 0; k < ts.size(); ++k) {
        const int t = ts[k];
        const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
        const double ab = sched.abar(t);
        const double ab_prev = t_prev > 0 ? sched.abar(t_prev) : 1.0;
        const double alpha_eff = ab / ab_prev;
        const double beta_eff = 1.0 - alpha_eff;
        const float c_eps = float(beta_eff / std::sqrt(1.0 - ab));
        const float c_x = float(1.0 / std::sqrt(alpha_eff));
        const float sigma =
            t_prev > 0
                ? float(std::sqrt(beta_eff * (1.0 - ab_prev) / (1.0 - ab)))
                : 0.0f;

        const Tensor<float> eps_hat = predict(x, std::vector<int>(size_t(n), t));
        require(eps_hat.shape == x.shape, "sample: predictor shape mismatch");
        for (int i = 0; i < n; ++i) {
            float* xi = x.ptr() + size_t(i) * img;
            const float* ei = eps_hat.ptr() + size_t(i) * img;
            if (sigma > 0.0f) {
                Rng zr(derive_seed(seeds[size_t(i)], kTagZ, k));
                for (size_t j = 0; j < img; ++j)
                    xi[j] = c_x * (xi[j] - c_eps * ei[j]) +
                            sigma * float(zr.normal());
            } else {
                for (size_t j = 0; j < img; ++j)
                    xi[j] = c_x * (xi[j] - c_eps * ei[j]);
            }
        }
    }
    for (auto& v : x.data) v = std::clamp(v, 0.0f, 1.0f);
    return x;
}

SampleInputs make_sample_inputs(const std::vector<const TrainSample*>& samples,
                                int side) {
    const int n = int(samples.size());
    SampleInputs in;
    in.x_clean = Tensor<float>({n, 3, side, side});
    in.hsv = Tensor<float>({n, 3, side, side});
    in.contour = Tensor<float>({n, 1, side, side});
    const size_t img = size_t(3) * side * side;
    const size_t con = size_t(side) * side;
    for (int i = 0; i < n; ++i) {
        const TrainSample& s = *samples[size_t(i)];
        require(s.x_inp.dim(1) == side, "sample: side mismatch");
        std::memcpy(in.x_clean.ptr() + size_t(i) * img, s.x_inp.ptr(),
                    img * sizeof(float));
        std::memcpy(in.hsv.ptr() + size_t(i) * img, s.hsv_inp.ptr(),
                    img * sizeof(float));
        std::memcpy(in.contour.ptr() + size_t(i) * con, s.contour_inp.ptr(),
                    con * sizeof(float));
        in.color_tokens.push_back(s.assessment.color_tokens);
        in.structure_tokens.push_back(s.assessment.structure_tokens);
        in.caption_ids.push_back({s.semantic_key});
    }
    return in;
}

Tensor<float> sample_model(const ParamStore<float>& params, const ModelConfig& mc,
                           const RunConfig& cfg, const NoiseSchedule& sched,
                           const SampleInputs& in,
                           const std::vector<uint64_t>& seeds) {
    const int n = in.x_clean.dim(0);
    require(int(seeds.size()) == n, "sample: one seed per sample");
    const int side = mc.unet.side;
    const MapMode map = cfg.map();

    // conditioning features, once per batch
    std::vector<Tensor<float>> vis_col, vis_str;
    if (map != MapMode::NoVisual) {
        Graph<float> g;
        g.train_mode = false;
        const BoundParams<float> P = bind_params(g, params, false);
        auto feats = encode_visual_graph(g, P, mc.adapter, g.leaf(in.hsv),
                                         g.leaf(in.contour));
        for (int id : feats.first) vis_col.push_back(g.val(id));
        for (int id : feats.second) vis_str.push_back(g.val(id));
    } else {
        for (size_t l = 0; l < mc.adapter.widths.size(); ++l) {
            const int s = side >> l;
            vis_col.emplace_back(Shape{n, mc.adapter.widths[l], s, s});
            vis_str.emplace_back(Shape{n, mc.adapter.widths[l], s, s});
        }
    }
    Tensor<float> txt_col({n, kAttrWidth}), txt_str({n, kAttrWidth});
    if (map != MapMode::NoText) {
        const Tensor<float>& table = params.at("embed.attr");
        auto fill = [&](Tensor<float>& dst, const std::vector<std::vector<int>>& toks) {
            for (int i = 0; i < n; ++i) {
                if (toks[size_t(i)].empty()) continue;
                const float inv = 1.0f / float(toks[size_t(i)].size());
                for (int tok : toks[size_t(i)])
                    for (int j = 0; j < kAttrWidth; ++j)
                        dst[size_t(i) * kAttrWidth + j] +=
                            inv * table[size_t(tok) * kAttrWidth + j];
            }
        };
        fill(txt_col, in.color_tokens);
        fill(txt_str, in.structure_tokens);
    }
    Tensor<float> cap({n, mc.unet.cap_width});
    {
        const Tensor<float>& table = params.at("embed.caption");
        for (int i = 0; i < n; ++i) {
            require(in.caption_ids[size_t(i)].size() == 1, "sample: caption id");
            const int key = in.caption_ids[size_t(i)][0];
            require(key >= 0 && key < mc.num_captions, "sample: caption out of range");
            for (int j = 0; j < mc.unet.cap_width; ++j)
                cap[size_t(i) * mc.unet.cap_width + j] =
                    table[size_t(key) * mc.unet.cap_width + j];
        }
    }

    const Predictor pred = [&](const Tensor<float>& x_t,
                               const std::vector<int>& ts) {
        Graph<float> g;
        g.train_mode = false;
        const BoundParams<float> P = bind_params(g, params, false);
        CondNodes cond;
        for (const auto& f : vis_col) cond.vis_col.push_back(g.leaf(f));
        for (const auto& f : vis_str) cond.vis_str.push_back(g.leaf(f));
        cond.txt_col = g.leaf(txt_col);
        cond.txt_str = g.leaf(txt_str);
        const int out = unet_forward(g, P, mc.unet, g.leaf(x_t),
                                     g.leaf(in.x_clean), ts, g.leaf(cap), &cond);
        return g.val(out);
    };
    return ancestral_sample(sched, cfg.num_sample_steps, side, seeds, pred);
}

} // namespace diae
